"""Simulation lab for linear consensus dynamics with delay and anticipation."""

from .core import (
    Classification,
    ConstantDatum,
    DerivativeMode,
    HistoryBuffer,
    LinearDatum,
    ModelKind,
    NonFiniteStateError,
    OpinionState,
    SampledDatum,
    SimConfig,
    Trajectory,
    WeightMatrix,
    diameter,
    mean,
)
from .integrator import Mesh, refine_oracle, run
from .weights import (
    WeightSpec,
    gamma,
    make_random_row_stochastic,
    make_random_symmetric_bistochastic,
    make_uniform,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "Classification",
    "ConstantDatum",
    "DerivativeMode",
    "HistoryBuffer",
    "LinearDatum",
    "Mesh",
    "ModelKind",
    "NonFiniteStateError",
    "OpinionState",
    "SampledDatum",
    "SimConfig",
    "Trajectory",
    "WeightMatrix",
    "WeightSpec",
    "diameter",
    "gamma",
    "make_random_row_stochastic",
    "make_random_symmetric_bistochastic",
    "make_uniform",
    "mean",
    "refine_oracle",
    "run",
    "validate",
    "__version__",
]
