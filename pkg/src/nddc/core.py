"""Shared domain types: opinion states, mesh histories, weights, run records."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

MACHINE_EPS = float(np.finfo(float).eps)

#: Abort a run once the opinion diameter exceeds this multiple of max(1, d_x(0)).
DIVERGENCE_GUARD = 1.0e6


class NonFiniteStateError(ValueError):
    """An operation received a state with NaN or infinite entries."""


class HistoryWindowError(LookupError):
    """A history lookup fell outside the retained ring window."""


class MeshAlignmentError(ValueError):
    """A time quantity is not an integer multiple of the mesh step."""


class ModelKind(str, enum.Enum):
    TRANSMISSION = "transmission"
    REACTION = "reaction"
    TWO_AGENT_TRANSMISSION = "two-agent-transmission"
    TWO_AGENT_REACTION = "two-agent-reaction"

    @property
    def is_scalar(self) -> bool:
        """True for the two-agent reductions, which evolve the scalar gap x1 - x2."""
        return self in (ModelKind.TWO_AGENT_TRANSMISSION, ModelKind.TWO_AGENT_REACTION)

    @property
    def is_reaction(self) -> bool:
        return self in (ModelKind.REACTION, ModelKind.TWO_AGENT_REACTION)


class DerivativeMode(str, enum.Enum):
    """How the delayed derivative entering the anticipation term is evaluated.

    BACKWARD_DIFFERENCE recomputes (x(k) - x(k-1)) / dt from stored states;
    STORED_RHS reuses the right-hand side recorded when node k was accepted.
    Inside the initial-datum window both read the datum's analytic derivative.
    """

    BACKWARD_DIFFERENCE = "backward-difference"
    STORED_RHS = "stored-rhs"


class Classification(str, enum.Enum):
    CONVERGED = "converged"
    DIVERGED = "diverged"
    INCONCLUSIVE = "inconclusive"


@dataclass
class OpinionState:
    """Stack of agent opinion vectors (N x d) at one mesh time.

    Agent indices reported by any public operation are 1-based, matching the
    convention that agents are numbered 1..N.
    """

    values: np.ndarray
    time: float = 0.0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("opinion state must be an N x d matrix")
        n, d = self.values.shape
        if n < 2 or d < 1:
            raise ValueError(f"opinion state needs N >= 2 agents and d >= 1, got {n} x {d}")
        if not np.all(np.isfinite(self.values)):
            raise NonFiniteStateError("opinion state contains non-finite entries")

    @property
    def n_agents(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


@dataclass
class WeightMatrix:
    """Nonnegative N x N communication weights plus validated structural flags.

    Flags are set by ``weights.validate``; constructors return matrices with
    all five flags populated. ``row_stochastic`` refers to off-diagonal row
    sums (the diagonal is ignored by the transmission model and cancels in the
    reaction model), while ``bi_stochastic`` refers to full row and column sums.
    """

    weights: np.ndarray
    row_stochastic: bool = False
    symmetric: bool = False
    bi_stochastic: bool = False
    positive_off_diagonal: bool = False
    irreducible: bool = False

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def n(self) -> int:
        return self.weights.shape[0]

    def off_diagonal(self) -> np.ndarray:
        """The matrix with the diagonal zeroed (read-only view when already zero)."""
        if not self.weights.diagonal().any():
            return self.weights
        w = self.weights.copy()
        np.fill_diagonal(w, 0.0)
        return w


class HistoryBuffer:
    """Mesh-aligned ring of (state, derivative) node pairs around the current step.

    Node k sits at time k * step_size; nodes -delay_steps..0 are seeded from the
    initial datum. The ring retains at least the last 2*delay_steps + 1 nodes so
    that every delayed lookup of the integrator (and a 2-tau lookback) succeeds.
    """

    def __init__(
        self,
        step_size: float,
        delay_steps: int,
        n_agents: int,
        dim: int,
        capacity: Optional[int] = None,
    ) -> None:
        if step_size <= 0:
            raise ValueError("step size must be positive")
        if delay_steps < 1:
            raise ValueError("delay_steps must be >= 1")
        if capacity is None:
            capacity = 2 * delay_steps + 2
        if capacity < 2 * delay_steps + 1:
            raise ValueError("capacity must be at least 2*delay_steps + 1")
        self.step_size = float(step_size)
        self.delay_steps = int(delay_steps)
        self.n_agents = int(n_agents)
        self.dim = int(dim)
        self.capacity = int(capacity)
        self._states = np.zeros((capacity, n_agents, dim))
        self._derivs = np.zeros((capacity, n_agents, dim))
        self._latest = -1
        self._count = 0

    @property
    def delay(self) -> float:
        return self.step_size * self.delay_steps

    @property
    def latest(self) -> int:
        """Absolute index of the newest node (node 0 is t = 0)."""
        if self._count == 0:
            raise HistoryWindowError("history buffer is empty")
        return self._latest

    @property
    def earliest(self) -> int:
        if self._count == 0:
            raise HistoryWindowError("history buffer is empty")
        return self._latest - self._count + 1

    def seed_datum(self, states: np.ndarray, derivs: np.ndarray) -> None:
        """Load nodes -delay_steps..0 from datum samples (delay_steps + 1 each)."""
        states = np.asarray(states, dtype=float)
        derivs = np.asarray(derivs, dtype=float)
        m = self.delay_steps
        if states.shape != (m + 1, self.n_agents, self.dim):
            raise ValueError("datum sample block has wrong shape")
        if derivs.shape != states.shape:
            raise ValueError("datum derivative block has wrong shape")
        for k in range(-m, 1):
            slot = k % self.capacity
            self._states[slot] = states[k + m]
            self._derivs[slot] = derivs[k + m]
        self._latest = 0
        self._count = m + 1

    def append(self, state: np.ndarray, deriv: np.ndarray) -> None:
        node = self._latest + 1
        slot = node % self.capacity
        self._states[slot] = state
        self._derivs[slot] = deriv
        self._latest = node
        self._count = min(self._count + 1, self.capacity)

    def _slot(self, node: int, clamp: bool) -> int:
        lo, hi = self.earliest, self._latest
        if node > hi or (node < lo and not clamp):
            raise HistoryWindowError(f"node {node} outside retained window [{lo}, {hi}]")
        return max(node, lo) % self.capacity

    def state(self, node: int, clamp: bool = False) -> np.ndarray:
        """State at absolute node index; clamp=True substitutes the earliest node."""
        return self._states[self._slot(node, clamp)]

    def deriv(self, node: int, clamp: bool = False) -> np.ndarray:
        return self._derivs[self._slot(node, clamp)]

    def time_of(self, node: int) -> float:
        return node * self.step_size


@dataclass
class ConstantDatum:
    """Initial trajectories x0(t) = c with zero derivative."""

    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.atleast_2d(np.asarray(self.values, dtype=float))

    def on_mesh(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = len(times)
        states = np.repeat(self.values[None, :, :], k, axis=0)
        return states, np.zeros_like(states)


@dataclass
class LinearDatum:
    """Initial trajectories x0(t) = a + t * b with derivative b."""

    start: np.ndarray
    slope: np.ndarray

    def __post_init__(self) -> None:
        self.start = np.atleast_2d(np.asarray(self.start, dtype=float))
        self.slope = np.atleast_2d(np.asarray(self.slope, dtype=float))
        if self.start.shape != self.slope.shape:
            raise ValueError("start and slope must have the same shape")

    def on_mesh(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        states = self.start[None, :, :] + times[:, None, None] * self.slope[None, :, :]
        derivs = np.repeat(self.slope[None, :, :], len(times), axis=0)
        return states, derivs


@dataclass
class SampledDatum:
    """Initial trajectories given as mesh-aligned (time, state, derivative) samples."""

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        self.derivs = np.asarray(self.derivs, dtype=float)
        if self.states.shape != self.derivs.shape or len(self.times) != len(self.states):
            raise ValueError("sampled datum arrays are inconsistent")

    def on_mesh(self, times: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        times = np.asarray(times, dtype=float)
        if len(times) != len(self.times):
            raise MeshAlignmentError(
                f"datum table has {len(self.times)} samples, mesh needs {len(times)}"
            )
        tol = 1e-12 * max(1.0, float(np.max(np.abs(times))) if len(times) else 1.0)
        if np.max(np.abs(self.times - times)) > tol:
            raise MeshAlignmentError("datum table is not aligned with the mesh")
        return self.states.copy(), self.derivs.copy()


Datum = Union[ConstantDatum, LinearDatum, SampledDatum]


@dataclass
class SimConfig:
    """Full description of one simulation run."""

    model: ModelKind
    tau: float
    lam: float
    datum: Datum
    n: int = 2
    d: int = 1
    steps_per_delay: int = 32
    t_end: float = 50.0
    weights: Optional[WeightMatrix] = None
    derivative_mode: DerivativeMode = DerivativeMode.BACKWARD_DIFFERENCE
    seed: int = 0

    def __post_init__(self) -> None:
        self.model = ModelKind(self.model)
        self.derivative_mode = DerivativeMode(self.derivative_mode)
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        if self.steps_per_delay < 1:
            raise ValueError("steps_per_delay must be >= 1")
        if self.t_end <= 0:
            raise ValueError("t_end must be positive")


@dataclass
class ClassificationEvidence:
    """Trailing-window amplitude statistics backing a run classification."""

    initial_dx: float
    final_dx: float
    trailing_peak: float
    trailing_ratio: float
    aborted: bool = False
    abort_step: Optional[int] = None


@dataclass
class Trajectory:
    """Recorded time series of one run plus per-step diagnostics.

    ``states`` and ``derivatives`` have shape (K+1, N, d) over mesh nodes
    0..K (t >= 0). ``argmax_pairs`` holds the 1-based agent pair attaining the
    diameter at each node; for the two-agent scalar reductions the stored state
    is the gap x1 - x2, the diameter series is |x|, and the pair is (1, 2).
    """

    config: SimConfig
    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray
    diameters: np.ndarray
    argmax_pairs: np.ndarray
    means: np.ndarray
    classification: Classification
    evidence: ClassificationEvidence

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def state_at(self, node: int) -> np.ndarray:
        return self.states[node]


def _as_values(state) -> np.ndarray:
    values = getattr(state, "values", state)
    return np.asarray(values, dtype=float)


def diameter(state) -> tuple[float, tuple[int, int]]:
    """Maximum pairwise Euclidean distance and the attaining agent pair.

    Ties are broken by the lexicographically smallest 1-based pair (i, j),
    i < j, so the result is a total order over argmax candidates.
    """
    values = _as_values(state)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ValueError("diameter needs an N x d state with N >= 2")
    if not np.all(np.isfinite(values)):
        raise NonFiniteStateError("diameter of a non-finite state")
    dists, pairs = diameter_series(values[None, :, :])
    return float(dists[0]), (int(pairs[0, 0]), int(pairs[0, 1]))


def diameter_series(states: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized diameters and 1-based argmax pairs for a (T, N, d) stack."""
    states = np.asarray(states, dtype=float)
    t_total, n, d = states.shape
    dists = np.empty(t_total)
    pairs = np.empty((t_total, 2), dtype=int)
    mask = ~np.triu(np.ones((n, n), dtype=bool), k=1)
    chunk = max(1, 262144 // max(1, n * n * d))
    for s in range(0, t_total, chunk):
        block = states[s : s + chunk]
        diff = block[:, :, None, :] - block[:, None, :, :]
        d2 = np.einsum("tijk,tijk->tij", diff, diff)
        d2[:, mask] = -1.0
        flat = d2.reshape(len(block), -1)
        idx = flat.argmax(axis=1)
        sel = np.arange(len(block))
        dists[s : s + chunk] = np.sqrt(flat[sel, idx])
        pairs[s : s + chunk, 0] = idx // n + 1
        pairs[s : s + chunk, 1] = idx % n + 1
    return dists, pairs


def mean(state) -> np.ndarray:
    """Arithmetic mean of the agent opinion vectors (a d-vector)."""
    values = _as_values(state)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError("mean needs an N x d state")
    if not np.all(np.isfinite(values)):
        raise NonFiniteStateError("mean of a non-finite state")
    return values.mean(axis=0)
