"""Fixed-step implicit-Euler integration of the delay models with history buffers."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import models
from .core import (
    DIVERGENCE_GUARD,
    Classification,
    DerivativeMode,
    HistoryBuffer,
    MeshAlignmentError,
    ModelKind,
    NonFiniteStateError,
    SimConfig,
    Trajectory,
    WeightMatrix,
    diameter_series,
)
from .diagnostics import classify_series
from .models import ScalarHistory


@dataclass(frozen=True)
class Mesh:
    """Equidistant time mesh with the delay an exact integer multiple of the step.

    For tau = 0 the model degenerates to an ODE; the step is then
    1/steps_per_delay (steps_per_delay steps per unit time).
    """

    tau: float
    steps_per_delay: int
    step_size: float
    total_steps: int

    @classmethod
    def build(cls, tau: float, steps_per_delay: int, t_end: float) -> "Mesh":
        if steps_per_delay < 1:
            raise ValueError("steps_per_delay must be >= 1")
        if tau < 0:
            raise ValueError("tau must be >= 0")
        if t_end <= 0:
            raise ValueError("t_end must be positive")
        dt = tau / steps_per_delay if tau > 0 else 1.0 / steps_per_delay
        ratio = t_end / dt
        total = int(round(ratio))
        if total < 1 or abs(total * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
            raise MeshAlignmentError(
                f"t_end = {t_end} is not an integer multiple of dt = {dt}"
            )
        return cls(tau=float(tau), steps_per_delay=int(steps_per_delay),
                   step_size=dt, total_steps=total)

    @property
    def datum_times(self) -> np.ndarray:
        """Mesh points of [-tau, 0] (the single point 0 when tau = 0)."""
        if self.tau == 0:
            return np.zeros(1)
        return np.arange(-self.steps_per_delay, 1) * self.step_size


def aligned_t_end(tau: float, steps_per_delay: int, t_target: float) -> float:
    """Smallest mesh-multiple horizon >= t_target (used by sweeps and presets)."""
    dt = tau / steps_per_delay if tau > 0 else 1.0 / steps_per_delay
    return math.ceil(t_target / dt - 1e-9) * dt


def init_history(datum, mesh: Mesh, n: int, d: int) -> HistoryBuffer:
    """Seed a history buffer with the datum's m+1 samples at times -tau..0."""
    if mesh.tau == 0:
        raise ValueError("history buffers are only used for tau > 0")
    states, derivs = datum.on_mesh(mesh.datum_times)
    if states.shape[1:] != (n, d):
        raise ValueError(
            f"datum produces states of shape {states.shape[1:]}, expected ({n}, {d})"
        )
    buf = HistoryBuffer(mesh.step_size, mesh.steps_per_delay, n, d)
    buf.seed_datum(states, derivs)
    return buf


def _delayed_derivative(history: HistoryBuffer, node: int, mode: DerivativeMode) -> np.ndarray:
    # Nodes inside the datum window always use the stored analytic derivative.
    if node <= 0 or mode is DerivativeMode.STORED_RHS:
        return history.deriv(node)
    return (history.state(node) - history.state(node - 1)) / history.step_size


def _pairwise_rhs(weights: np.ndarray, targets: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    # Sum_j w_ij (targets_j - anchors_i), with the subtraction done per pair so
    # a consensus state yields exactly zero in floating point.
    diff = targets[None, :, :] - anchors[:, None, :]
    return np.einsum("ij,ijk->ik", weights, diff)


def step_transmission(
    history: HistoryBuffer,
    weights: WeightMatrix,
    lam: float,
    mode: DerivativeMode = DerivativeMode.BACKWARD_DIFFERENCE,
) -> np.ndarray:
    """One implicit-Euler step of the transmission (no self-delay) system.

    Solves (x_i(n+1) - x_i(n)) / dt = sum_{j != i} w_ij (y_j - x_i(n+1)) with
    y_j = x_j(n+1-m) + lam*tau * D_j(n+1-m); with off-diagonal row sums equal
    to 1 the closed form is x(n+1) = x(n) + dt/(1+dt) * sum_j w_ij (y_j - x_i(n)).
    The right-hand side evaluated at the accepted state is appended to the
    history as the node's derivative.
    """
    if not weights.row_stochastic:
        raise ValueError("transmission model requires off-diagonal row sums equal to 1")
    w0 = weights.off_diagonal()
    dt = history.step_size
    tau = history.delay
    n = history.latest
    k = n + 1 - history.delay_steps
    x = history.state(n)
    y = history.state(k) + (lam * tau) * _delayed_derivative(history, k, mode)
    x_new = x + (dt / (1.0 + dt)) * _pairwise_rhs(w0, y, x)
    if not _finite(x_new):
        raise NonFiniteStateError("transmission step produced a non-finite state")
    history.append(x_new, _pairwise_rhs(w0, y, x_new))
    return x_new


def step_reaction(
    history: HistoryBuffer,
    weights: WeightMatrix,
    lam: float,
    mode: DerivativeMode = DerivativeMode.BACKWARD_DIFFERENCE,
) -> np.ndarray:
    """One step of the reaction (self-delay) system.

    x_i(n+1) = x_i(n) + dt * sum_j w_ij (z_j - z_i) with
    z = x(n+1-m) + lam*tau * D(n+1-m); with m >= 1 every right-hand term is
    known, so the implicit scheme reduces to a direct update. Diagonal weights
    cancel in the pairwise differences.
    """
    dt = history.step_size
    tau = history.delay
    n = history.latest
    k = n + 1 - history.delay_steps
    z = history.state(k) + (lam * tau) * _delayed_derivative(history, k, mode)
    rhs = _pairwise_rhs(weights.weights, z, z)
    x_new = history.state(n) + dt * rhs
    if not _finite(x_new):
        raise NonFiniteStateError("reaction step produced a non-finite state")
    history.append(x_new, rhs)
    return x_new


def _finite(arr: np.ndarray) -> bool:
    return bool(np.all(np.isfinite(arr)))


def _range_bound(values: np.ndarray) -> float:
    # Euclidean norm of per-coordinate ranges: upper bound on the diameter
    # within a factor sqrt(d), cheap enough to evaluate every step.
    spread = values.max(axis=0) - values.min(axis=0)
    return float(np.sqrt(np.dot(spread, spread)))


def run(
    config: SimConfig,
    tol_low: float = 1e-3,
    tol_high: float = 1e3,
    trailing_fraction: float = 0.2,
) -> Trajectory:
    """Integrate one configuration and classify the resulting trajectory.

    Runs are aborted (classification Diverged) as soon as a state goes
    non-finite or the opinion diameter exceeds DIVERGENCE_GUARD times
    max(1, d_x(0)).
    """
    if config.model.is_scalar:
        return _run_scalar(config, tol_low, tol_high, trailing_fraction)
    return _run_matrix(config, tol_low, tol_high, trailing_fraction)


def _run_matrix(config, tol_low, tol_high, trailing_fraction) -> Trajectory:
    if config.weights is None:
        raise ValueError("N-agent models need a weight matrix")
    weights = config.weights
    if weights.n != config.n:
        raise ValueError("weight matrix size does not match n")
    mesh = Mesh.build(config.tau, config.steps_per_delay, config.t_end)
    dt = mesh.step_size

    datum_states, datum_derivs = config.datum.on_mesh(mesh.datum_times)
    if datum_states.shape[1:] != (config.n, config.d):
        raise ValueError("datum shape does not match (n, d)")
    if not (_finite(datum_states) and _finite(datum_derivs)):
        raise NonFiniteStateError("initial datum contains non-finite entries")
    x0 = datum_states[-1]

    states = [x0.copy()]
    derivs = [datum_derivs[-1].copy()]
    d0, _ = diameter_series(x0[None])
    # The in-loop guard compares the coordinate-range bound (>= d_x, <= sqrt(d) d_x),
    # so it can only fire earlier than the exact diameter would.
    guard = DIVERGENCE_GUARD * max(1.0, float(d0[0]))
    aborted = False
    abort_step = None

    if mesh.tau == 0:
        stepper = _ode_stepper(config.model, weights, dt)
        x = x0.copy()
        for n in range(mesh.total_steps):
            x, rhs = stepper(x)
            if not _finite(x):
                aborted, abort_step = True, n + 1
                break
            states.append(x.copy())
            derivs.append(rhs)
            if _range_bound(x) > guard:
                aborted, abort_step = True, n + 1
                break
    else:
        history = HistoryBuffer(dt, mesh.steps_per_delay, config.n, config.d)
        history.seed_datum(datum_states, datum_derivs)
        step = step_transmission if config.model is ModelKind.TRANSMISSION else step_reaction
        for n in range(mesh.total_steps):
            try:
                x = step(history, weights, config.lam, config.derivative_mode)
            except NonFiniteStateError:
                aborted, abort_step = True, n + 1
                break
            states.append(x.copy())
            derivs.append(history.deriv(history.latest).copy())
            if _range_bound(x) > guard:
                aborted, abort_step = True, n + 1
                break

    return _assemble(config, dt, states, derivs, aborted, abort_step,
                     tol_low, tol_high, trailing_fraction)


def _ode_stepper(model: ModelKind, weights: WeightMatrix, dt: float):
    # tau = 0 degenerates both models to ODEs; implicit Euler is solved in
    # increment form so a consensus state stays an exact fixed point.
    n = weights.n
    if model is ModelKind.TRANSMISSION:
        if not weights.row_stochastic:
            raise ValueError("transmission model requires off-diagonal row sums equal to 1")
        w = weights.off_diagonal()
        system = (1.0 + dt) * np.eye(n) - dt * w
    else:
        w = weights.weights.copy()
        row = w.sum(axis=1)
        laplacian = np.diag(row) - w
        system = np.eye(n) + dt * laplacian
    propagate = np.linalg.inv(system)

    def step(x: np.ndarray):
        x_new = x + dt * (propagate @ _pairwise_rhs(w, x, x))
        return x_new, _pairwise_rhs(w, x_new, x_new)

    return step


def _run_scalar(config, tol_low, tol_high, trailing_fraction) -> Trajectory:
    if config.d != 1:
        raise ValueError("two-agent reductions track a scalar gap; use d = 1")
    mesh = Mesh.build(config.tau, config.steps_per_delay, config.t_end)
    dt = mesh.step_size

    datum_states, datum_derivs = config.datum.on_mesh(mesh.datum_times)
    if datum_states.shape[1:] != (1, 1):
        raise ValueError("scalar models need a (1, 1) datum")
    if not (_finite(datum_states) and _finite(datum_derivs)):
        raise NonFiniteStateError("initial datum contains non-finite entries")
    x0 = float(datum_states[-1, 0, 0])

    values = [x0]
    derivs = [float(datum_derivs[-1, 0, 0])]
    guard = DIVERGENCE_GUARD * max(1.0, abs(x0))
    aborted = False
    abort_step = None

    if mesh.tau == 0:
        # Both gap equations reduce to x' = -2x; implicit Euler divides by 1 + 2 dt.
        shrink = 1.0 / (1.0 + 2.0 * dt)
        x = x0
        for n in range(mesh.total_steps):
            x = x * shrink
            values.append(x)
            derivs.append(-2.0 * x)
            if abs(x) > guard:
                aborted, abort_step = True, n + 1
                break
    else:
        history = ScalarHistory(datum_states[:, 0, 0], datum_derivs[:, 0, 0],
                                dt, mesh.steps_per_delay)
        step = (
            models.step_two_agent_transmission
            if config.model is ModelKind.TWO_AGENT_TRANSMISSION
            else models.step_two_agent_reaction
        )
        mode = config.derivative_mode
        lam = config.lam
        for n in range(mesh.total_steps):
            try:
                x = step(history, lam, mode)
            except NonFiniteStateError:
                aborted, abort_step = True, n + 1
                break
            values.append(x)
            derivs.append(history.deriv(history.latest))
            if abs(x) > guard:
                aborted, abort_step = True, n + 1
                break

    states = np.asarray(values)[:, None, None]
    deriv_arr = np.asarray(derivs)[:, None, None]
    return _assemble(config, dt, states, deriv_arr, aborted, abort_step,
                     tol_low, tol_high, trailing_fraction, scalar=True)


def _assemble(config, dt, states, derivs, aborted, abort_step,
              tol_low, tol_high, trailing_fraction, scalar=False) -> Trajectory:
    states = np.asarray(states, dtype=float)
    derivs = np.asarray(derivs, dtype=float)
    count = len(states)
    times = np.arange(count) * dt
    if scalar:
        diameters = np.abs(states[:, 0, 0])
        pairs = np.tile(np.array([1, 2]), (count, 1))
    else:
        diameters, pairs = diameter_series(states)
    means = states.mean(axis=1)
    classification, evidence = classify_series(
        diameters, aborted=aborted, abort_step=abort_step,
        tol_low=tol_low, tol_high=tol_high, trailing_fraction=trailing_fraction,
    )
    return Trajectory(
        config=config,
        times=times,
        states=states,
        derivatives=derivs,
        diameters=diameters,
        argmax_pairs=pairs,
        means=means,
        classification=classification,
        evidence=evidence,
    )


@dataclass
class RefineResult:
    """Step-halving convergence study (the derived-value oracle)."""

    step_sizes: list
    end_state_diffs: list
    ratios: list


def refine_oracle(config: SimConfig, levels: int = 4) -> RefineResult:
    """Run at dt, dt/2, ... and difference the final states.

    Consecutive difference ratios near 2 certify first-order convergence of
    the scheme on the given configuration. Divergent configurations are
    rejected.
    """
    if levels < 2:
        raise ValueError("need at least two refinement levels")
    finals = []
    steps = []
    for level in range(levels):
        cfg = replace(config, steps_per_delay=config.steps_per_delay * 2**level)
        traj = run(cfg)
        if traj.classification is Classification.DIVERGED:
            raise ValueError("refine_oracle rejects divergent configurations")
        finals.append(traj.states[-1])
        steps.append(Mesh.build(cfg.tau, cfg.steps_per_delay, cfg.t_end).step_size)
    diffs = [
        float(np.linalg.norm(finals[i + 1] - finals[i])) for i in range(levels - 1)
    ]
    ratios = [
        diffs[i] / diffs[i + 1] if diffs[i + 1] > 0 else math.inf
        for i in range(levels - 2)
    ]
    return RefineResult(step_sizes=steps, end_state_diffs=diffs, ratios=ratios)
