"""Command-line entry point: run, sweep, figure, validate-weights, check-theorems."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import diagnostics, harness, io, presets, sweep
from .core import ModelKind
from .integrator import run as run_sim
from .weights import WeightSpec, validate


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file; flags override it")
    parser.add_argument("--model", choices=[m.value for m in ModelKind])
    parser.add_argument("--tau", type=float)
    parser.add_argument("--lambda", dest="lam", type=float)
    parser.add_argument("--steps-per-delay", type=int)
    parser.add_argument("--t-end", type=float)
    parser.add_argument("--n", type=int)
    parser.add_argument("--d", type=int)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--weights",
                        help="weights file, or one of: uniform, random-row, random-sym")
    parser.add_argument("--min-off-diagonal", type=float)
    parser.add_argument("--datum", help="constant:c | linear:a,b | file:PATH")
    parser.add_argument("--derivative-mode",
                        choices=["backward-difference", "stored-rhs"])
    parser.add_argument("--out", type=Path, default=Path("nddc-out"))


def _weights_payload(args) -> dict | None:
    if args.weights is None:
        return None
    spec_kinds = {
        "uniform": "uniform",
        "random-row": "random-row-stochastic",
        "random-sym": "random-symmetric-bistochastic",
    }
    if args.weights in spec_kinds:
        return {
            "kind": spec_kinds[args.weights],
            "n": args.n if args.n is not None else 2,
            "min_off_diagonal": args.min_off_diagonal,
            "seed": args.seed if args.seed is not None else 0,
        }
    with open(args.weights) as fh:
        return json.load(fh)


def _datum_payload(value: str | None) -> dict | None:
    if value is None:
        return None
    if value.startswith("constant:"):
        return {"kind": "constant", "values": float(value.split(":", 1)[1])}
    if value.startswith("linear:"):
        a, b = value.split(":", 1)[1].split(",")
        return {"kind": "linear", "start": float(a), "slope": float(b)}
    if value.startswith("file:"):
        with open(value.split(":", 1)[1]) as fh:
            return json.load(fh)
    raise ValueError(f"cannot parse datum spec {value!r}")


def _overrides(args) -> dict:
    return {
        "model": args.model,
        "tau": args.tau,
        "lambda": args.lam,
        "steps_per_delay": args.steps_per_delay,
        "t_end": args.t_end,
        "n": args.n,
        "d": args.d,
        "seed": args.seed,
        "weights": _weights_payload(args),
        "datum": _datum_payload(args.datum),
        "derivative_mode": args.derivative_mode,
    }


def _cmd_run(args) -> int:
    config = io.parse_config(args.config, _overrides(args))
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    traj = run_sim(config)
    duration = time.perf_counter() - started
    csv_path = out / "trajectory.csv"
    io.write_trajectory_csv(traj, csv_path)
    outputs = [csv_path]
    if args.diagnostics and not config.model.is_scalar:
        report = diagnostics.track_ij(traj)
        ij_path = out / "ij.csv"
        io.write_ij_csv(report, traj, ij_path)
        outputs.append(ij_path)
        try:
            if config.model is ModelKind.TRANSMISSION:
                series = diagnostics.lyap_transmission(traj)
            else:
                series = diagnostics.lyap_reaction(traj)
            lyap_path = out / "lyapunov.csv"
            io.write_lyapunov_csv(series, lyap_path)
            outputs.append(lyap_path)
        except ValueError as exc:
            print(f"lyapunov monitor skipped: {exc}", file=sys.stderr)
    manifest = io.RunManifest(
        config=io.config_to_dict(config),
        duration_seconds=duration,
        outputs=outputs,
        classification=traj.classification.value,
        summary={
            "final_dx": traj.evidence.final_dx,
            "trailing_peak": traj.evidence.trailing_peak,
            "trailing_ratio": traj.evidence.trailing_ratio,
            "aborted": traj.evidence.aborted,
        },
    )
    io.write_manifest(manifest, out / "manifest.json")
    print(f"{config.model.value}: {traj.classification.value} "
          f"(final d_x = {traj.evidence.final_dx:.3e})")
    return 0


def _parse_axis(text: str) -> np.ndarray:
    lo, hi, count = text.split(":")
    return np.linspace(float(lo), float(hi), int(count))


def _cmd_sweep(args) -> int:
    settings = sweep.SweepSettings(
        model=ModelKind(args.model),
        steps_per_delay=args.steps_per_delay or 32,
        t_end=args.t_end,
    )
    grid = sweep.grid_sweep(settings, _parse_axis(args.lambda_range),
                            _parse_axis(args.tau_range))
    args.out.mkdir(parents=True, exist_ok=True)
    io.write_grid_csv(grid, args.out / "grid.csv")
    io.write_grid_json(grid, args.out / "grid.json")
    counts = {}
    for label in grid.raster.ravel():
        counts[label] = counts.get(label, 0) + 1
    print(f"sweep {args.model}: {counts}")
    return 0


def _cmd_figure(args) -> int:
    preset = presets.figure_preset(args.name)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    summary = {}
    outputs = []
    if preset.sweep is not None:
        grid = sweep.grid_sweep(preset.sweep.settings, preset.sweep.lam_values,
                                preset.sweep.tau_values)
        for name, writer in (("grid.csv", io.write_grid_csv),
                             ("grid.json", io.write_grid_json)):
            path = out / f"{preset.name}_{name}"
            writer(grid, path)
            outputs.append(path)
        summary["boundary"] = [None if np.isnan(v) else float(v) for v in grid.boundary]
        config_payload = {"sweep": preset.name}
    else:
        config_payload = {}
        for item in preset.runs:
            traj = run_sim(item.config)
            path = out / f"{preset.name}_{item.label.replace('=', '')}.csv"
            io.write_trajectory_csv(traj, path)
            outputs.append(path)
            summary[item.label] = traj.classification.value
            config_payload[item.label] = io.config_to_dict(item.config)
            print(f"{preset.name} {item.label}: {traj.classification.value}")
    manifest = io.RunManifest(
        config=config_payload,
        duration_seconds=time.perf_counter() - started,
        outputs=outputs,
        summary=summary,
    )
    io.write_manifest(manifest, out / f"{preset.name}_manifest.json")
    return 0


def _cmd_validate_weights(args) -> int:
    try:
        if args.weights in ("uniform", "random-row", "random-sym"):
            spec_kinds = {
                "uniform": "uniform",
                "random-row": "random-row-stochastic",
                "random-sym": "random-symmetric-bistochastic",
            }
            wm = WeightSpec(kind=spec_kinds[args.weights], n=args.n,
                            min_off_diagonal=args.min_off_diagonal,
                            seed=args.seed).build()
        else:
            wm = io.load_weights(args.weights)
        wm = validate(wm.weights)
    except (ValueError, OSError) as exc:
        print(f"invalid weights: {exc}", file=sys.stderr)
        return 1
    for flag in ("row_stochastic", "symmetric", "bi_stochastic",
                 "positive_off_diagonal", "irreducible"):
        print(f"{flag}: {getattr(wm, flag)}")
    return 0


def _cmd_check_theorems(args) -> int:
    ok = harness.check_theorems(count=args.instances, base_seed=args.seed,
                                t_end=args.t_end, report=print)
    print("all theorem checks passed" if ok else "THEOREM CHECK FAILURES")
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nddc",
        description="Delay-and-anticipation consensus simulation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configuration")
    _add_run_flags(p_run)
    p_run.add_argument("--diagnostics", action="store_true",
                       help="also emit Lyapunov and argmax-pair CSVs")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="classify a (lambda, tau) grid")
    p_sweep.add_argument("--model", required=True,
                         choices=[m.value for m in ModelKind if m.is_scalar])
    p_sweep.add_argument("--lambda-range", required=True, metavar="LO:HI:N")
    p_sweep.add_argument("--tau-range", required=True, metavar="LO:HI:N")
    p_sweep.add_argument("--steps-per-delay", type=int)
    p_sweep.add_argument("--t-end", type=float)
    p_sweep.add_argument("--out", type=Path, default=Path("nddc-out"))
    p_sweep.set_defaults(func=_cmd_sweep)

    p_fig = sub.add_parser("figure", help="replay a reference experiment")
    p_fig.add_argument("name", choices=["fig1", "fig2", "fig3", "fig4"])
    p_fig.add_argument("--out", type=Path, default=Path("nddc-out"))
    p_fig.set_defaults(func=_cmd_figure)

    p_val = sub.add_parser("validate-weights", help="set and print structural flags")
    p_val.add_argument("--weights", required=True)
    p_val.add_argument("--n", type=int, default=2)
    p_val.add_argument("--min-off-diagonal", type=float)
    p_val.add_argument("--seed", type=int, default=0)
    p_val.set_defaults(func=_cmd_validate_weights)

    p_chk = sub.add_parser("check-theorems",
                           help="random-instance property harness for both guarantees")
    p_chk.add_argument("--instances", type=int, default=50)
    p_chk.add_argument("--seed", type=int, default=0)
    p_chk.add_argument("--t-end", type=float, default=100.0)
    p_chk.set_defaults(func=_cmd_check_theorems)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
