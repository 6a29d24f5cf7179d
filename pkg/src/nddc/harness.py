"""Randomized property suites exercising the consensus guarantees."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .core import ConstantDatum, ModelKind, SimConfig, Trajectory
from .integrator import aligned_t_end, run
from .weights import make_random_row_stochastic, make_random_symmetric_bistochastic

#: Decay required of d_x(t_end) / d_x(0) by both theorem suites.
DECAY_THRESHOLD = 1e-3
#: Admissible drift of the mean under symmetric reaction weights.
MEAN_DRIFT_THRESHOLD = 1e-10


@dataclass
class TheoremRun:
    """One random instance of a theorem suite together with its run."""

    theorem: str
    seed: int
    n: int
    d: int
    tau: float
    lam: float
    trajectory: Trajectory
    decay_ratio: float
    mean_drift: float

    @property
    def passed(self) -> bool:
        if self.decay_ratio >= DECAY_THRESHOLD:
            return False
        if self.theorem == "reaction" and self.mean_drift > MEAN_DRIFT_THRESHOLD:
            return False
        return True


def _random_datum(rng: np.random.Generator, n: int, d: int) -> ConstantDatum:
    # Constant-per-agent opinions scaled so the largest agent norm is exactly 1,
    # which pins the datum magnitude bound M = 1 for the a-priori checks.
    while True:
        values = rng.uniform(-1.0, 1.0, size=(n, d))
        norms = np.linalg.norm(values, axis=1)
        if norms.max() > 1e-6 and np.abs(values - values[0]).max() > 1e-6:
            return ConstantDatum(values / norms.max())


def transmission_instance(seed: int, t_end: float = 100.0) -> SimConfig:
    """Random transmission run satisfying the consensus guarantee lam*tau <= 1."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    d = int(rng.integers(1, 4))
    tau = float(rng.uniform(0.1, 0.8))
    lam = float(rng.uniform(0.0, 1.0)) / tau
    weights = make_random_row_stochastic(n, 0.5 / (n - 1), seed)
    m = 32
    return SimConfig(
        model=ModelKind.TRANSMISSION,
        tau=tau,
        lam=lam,
        datum=_random_datum(rng, n, d),
        n=n,
        d=d,
        steps_per_delay=m,
        t_end=aligned_t_end(tau, m, t_end),
        weights=weights,
        seed=seed,
    )


def reaction_instance(seed: int, t_end: float = 100.0) -> SimConfig:
    """Random reaction run satisfying the consensus guarantee (1+lam)*tau < 1/2."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(3, 9))
    d = int(rng.integers(1, 4))
    tau = float(rng.uniform(0.05, 0.4))
    total = float(rng.uniform(tau, 0.49))
    lam = total / tau - 1.0
    weights = make_random_symmetric_bistochastic(n, seed)
    m = 32
    return SimConfig(
        model=ModelKind.REACTION,
        tau=tau,
        lam=lam,
        datum=_random_datum(rng, n, d),
        n=n,
        d=d,
        steps_per_delay=m,
        t_end=aligned_t_end(tau, m, t_end),
        weights=weights,
        seed=seed,
    )


def _evaluate(theorem: str, config: SimConfig, seed: int) -> TheoremRun:
    traj = run(config)
    decay = traj.diameters[-1] / traj.diameters[0]
    drift = float(np.linalg.norm(traj.means - traj.means[0], axis=1).max())
    return TheoremRun(
        theorem=theorem,
        seed=seed,
        n=config.n,
        d=config.d,
        tau=config.tau,
        lam=config.lam,
        trajectory=traj,
        decay_ratio=float(decay),
        mean_drift=drift,
    )


def iter_transmission_suite(
    count: int = 50, base_seed: int = 0, t_end: float = 100.0
) -> Iterator[TheoremRun]:
    for k in range(count):
        seed = base_seed + k
        yield _evaluate("transmission", transmission_instance(seed, t_end), seed)


def iter_reaction_suite(
    count: int = 50, base_seed: int = 0, t_end: float = 100.0
) -> Iterator[TheoremRun]:
    for k in range(count):
        seed = base_seed + k
        yield _evaluate("reaction", reaction_instance(seed, t_end), seed)


def check_theorems(
    count: int = 50,
    base_seed: int = 0,
    t_end: float = 100.0,
    report=None,
) -> bool:
    """Run both suites, optionally printing a pass/fail table. True iff all pass."""
    all_ok = True
    if report:
        report(f"{'theorem':<14} {'seed':>5} {'N':>2} {'d':>2} {'tau':>7} "
               f"{'lambda':>8} {'decay':>10} {'drift':>10}  status")
    for suite in (iter_transmission_suite, iter_reaction_suite):
        for result in suite(count=count, base_seed=base_seed, t_end=t_end):
            ok = result.passed
            all_ok = all_ok and ok
            if report:
                report(
                    f"{result.theorem:<14} {result.seed:>5} {result.n:>2} "
                    f"{result.d:>2} {result.tau:>7.4f} {result.lam:>8.4f} "
                    f"{result.decay_ratio:>10.3e} {result.mean_drift:>10.3e}  "
                    f"{'pass' if ok else 'FAIL'}"
                )
            # Free the trajectory eagerly; suites at full count hold ~100 runs.
            result.trajectory = None  # type: ignore[assignment]
    return all_ok
