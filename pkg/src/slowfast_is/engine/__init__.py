"""Monte Carlo engine: controls, controlled sampler and estimators."""

from .controls import (
    ControlPolicy,
    PeriodicTable,
    constant_policy,
    gradient_range,
    make_control_r1,
    make_control_r2,
    make_control_r3,
    zero_policy,
)
from .kernels import available_backends, backend, set_backend
from .simulate import (
    SWEEP_COLUMNS,
    BatchOutcome,
    Box,
    EstimatorReport,
    ExpCost,
    HalfSpace,
    Indicator,
    SimConfig,
    TrajectoryOutcome,
    auto_dt,
    fast_stiffness,
    decay_bound,
    estimate,
    integrate_controlled,
    simulate_batch,
    summarize,
    sweep_epsilon,
)

__all__ = [
    "ControlPolicy", "PeriodicTable", "constant_policy", "gradient_range", "make_control_r1",
    "make_control_r2", "make_control_r3", "zero_policy", "available_backends", "backend",
    "set_backend", "SWEEP_COLUMNS", "BatchOutcome", "Box", "EstimatorReport", "ExpCost",
    "HalfSpace", "Indicator", "SimConfig", "TrajectoryOutcome", "auto_dt", "fast_stiffness", "decay_bound",
    "estimate", "integrate_controlled", "simulate_batch", "summarize", "sweep_epsilon",
]
