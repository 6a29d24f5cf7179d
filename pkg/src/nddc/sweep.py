"""Classify the (lambda, tau) plane by simulation and extract stability boundaries."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Classification, ConstantDatum, ModelKind, SimConfig
from .integrator import aligned_t_end, run

#: Critical delay of the no-anticipation two-agent reaction equation.
CRITICAL_TAU_NO_ANTICIPATION = math.pi / 4.0


@dataclass(frozen=True)
class SweepSettings:
    """Per-cell run recipe for grid sweeps and boundary bisection.

    ``t_end`` of None means max(50, 40*tau); every horizon is rounded up to
    the next mesh multiple. Only the two-agent reductions are swept (the
    N-agent models have no free scalar gap to classify against a constant
    datum).
    """

    model: ModelKind
    steps_per_delay: int = 32
    t_end: Optional[float] = None
    datum_value: float = 1.0
    tol_low: float = 1e-3
    tol_high: float = 1e3

    def __post_init__(self) -> None:
        if not ModelKind(self.model).is_scalar:
            raise ValueError("sweeps cover the two-agent reduction models only")


def cell_config(settings: SweepSettings, lam: float, tau: float,
                steps_per_delay: Optional[int] = None,
                t_end: Optional[float] = None) -> SimConfig:
    m = steps_per_delay if steps_per_delay is not None else settings.steps_per_delay
    target = t_end if t_end is not None else settings.t_end
    if target is None:
        target = max(50.0, 40.0 * tau)
    return SimConfig(
        model=settings.model,
        tau=tau,
        lam=lam,
        datum=ConstantDatum([[settings.datum_value]]),
        n=1,
        d=1,
        steps_per_delay=m,
        t_end=aligned_t_end(tau, m, target),
    )


def _eval_cell(args) -> tuple[str, float, float]:
    settings, lam, tau = args
    traj = run(cell_config(settings, lam, tau),
               tol_low=settings.tol_low, tol_high=settings.tol_high)
    return (
        traj.classification.value,
        traj.evidence.final_dx,
        traj.evidence.trailing_ratio,
    )


@dataclass
class OverlayCurve:
    label: str
    lam: np.ndarray
    tau: np.ndarray


@dataclass
class StabilityGrid:
    """Classification raster over (lambda, tau) with boundary and overlays.

    ``raster[i, j]`` classifies the cell at tau_values[i], lam_values[j].
    The boundary entry for a lambda column is the tau midpoint between the
    highest Converged cell and the first Diverged cell above it (NaN when no
    such bracket exists).
    """

    lam_values: np.ndarray
    tau_values: np.ndarray
    raster: np.ndarray
    final_dx: np.ndarray
    trailing_ratio: np.ndarray
    boundary: np.ndarray
    overlays: list = field(default_factory=list)


def _extract_boundary(tau_values: np.ndarray, column: np.ndarray) -> float:
    converged = column == Classification.CONVERGED.value
    diverged = column == Classification.DIVERGED.value
    if not converged.any() or not diverged.any():
        return float("nan")
    top_converged = int(np.nonzero(converged)[0].max())
    above = np.nonzero(diverged[top_converged + 1 :])[0]
    if len(above) == 0:
        return float("nan")
    first_diverged = top_converged + 1 + int(above[0])
    return 0.5 * (tau_values[top_converged] + tau_values[first_diverged])


def grid_sweep(
    settings: SweepSettings,
    lam_values,
    tau_values,
    workers: Optional[int] = None,
) -> StabilityGrid:
    """Run one simulation per (lambda, tau) cell and classify it.

    Cells are independent jobs merged deterministically by index, so parallel
    and serial sweeps produce identical grids. Parallelism is capped by the
    NDDC_THREADS environment variable when ``workers`` is not given.
    """
    lam_values = np.asarray(lam_values, dtype=float)
    tau_values = np.asarray(tau_values, dtype=float)
    if workers is None:
        workers = int(os.environ.get("NDDC_THREADS", "1"))
    jobs = [
        (settings, float(lam), float(tau))
        for tau in tau_values
        for lam in lam_values
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_eval_cell, jobs, chunksize=8))
    else:
        results = [_eval_cell(job) for job in jobs]

    shape = (len(tau_values), len(lam_values))
    raster = np.array([r[0] for r in results], dtype=object).reshape(shape)
    final_dx = np.array([r[1] for r in results]).reshape(shape)
    ratio = np.array([r[2] for r in results]).reshape(shape)
    boundary = np.array(
        [_extract_boundary(tau_values, raster[:, j]) for j in range(len(lam_values))]
    )
    return StabilityGrid(
        lam_values=lam_values,
        tau_values=tau_values,
        raster=raster,
        final_dx=final_dx,
        trailing_ratio=ratio,
        boundary=boundary,
        overlays=analytic_overlays(settings.model, lam_values),
    )


def _classify_side(settings: SweepSettings, lam: float, tau: float) -> Classification:
    # Inconclusive cells get one retry at doubled resolution and horizon, then
    # count as the diverged side (conservative for the stable region).
    traj = run(cell_config(settings, lam, tau),
               tol_low=settings.tol_low, tol_high=settings.tol_high)
    if traj.classification is not Classification.INCONCLUSIVE:
        return traj.classification
    base_t = settings.t_end if settings.t_end is not None else max(50.0, 40.0 * tau)
    retry = cell_config(settings, lam, tau,
                        steps_per_delay=2 * settings.steps_per_delay,
                        t_end=2.0 * base_t)
    traj = run(retry, tol_low=settings.tol_low, tol_high=settings.tol_high)
    if traj.classification is Classification.CONVERGED:
        return Classification.CONVERGED
    return Classification.DIVERGED


def boundary_bisect(
    settings: SweepSettings,
    lam: float,
    tau_low: float,
    tau_high: float,
    iterations: int = 20,
) -> float:
    """Bisect in tau for the stability threshold at fixed lambda.

    Requires a valid bracket: Converged at tau_low, Diverged at tau_high
    (each judged by a full run). Returns the bracket midpoint after the given
    number of iterations.
    """
    if not tau_low < tau_high:
        raise ValueError("need tau_low < tau_high")
    if _classify_side(settings, lam, tau_low) is not Classification.CONVERGED:
        raise ValueError(f"tau_low = {tau_low} does not classify as Converged")
    if _classify_side(settings, lam, tau_high) is not Classification.DIVERGED:
        raise ValueError(f"tau_high = {tau_high} does not classify as Diverged")
    lo, hi = float(tau_low), float(tau_high)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if _classify_side(settings, lam, mid) is Classification.CONVERGED:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def analytic_overlays(model: ModelKind, lam_values) -> list[OverlayCurve]:
    """Closed-form condition curves tau(lambda) to draw over a stability grid."""
    lam_values = np.asarray(lam_values, dtype=float)
    model = ModelKind(model)
    curves: list[OverlayCurve] = []
    if model.is_reaction:
        curves.append(OverlayCurve(
            label="sufficient-condition",
            lam=lam_values,
            tau=1.0 / (2.0 * (1.0 + lam_values)),
        ))
        if model is ModelKind.TWO_AGENT_REACTION:
            curves.append(OverlayCurve(
                label="no-anticipation-critical",
                lam=lam_values,
                tau=np.full_like(lam_values, CRITICAL_TAU_NO_ANTICIPATION),
            ))
    else:
        with np.errstate(divide="ignore"):
            curves.append(OverlayCurve(
                label="two-agent-boundary" if model.is_scalar else "consensus-guarantee",
                lam=lam_values,
                tau=np.where(lam_values > 0, 1.0 / np.where(lam_values > 0, lam_values, 1.0),
                             np.inf),
            ))
    return curves
