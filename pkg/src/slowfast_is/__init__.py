"""Rare-event importance sampling for small-noise slow-fast diffusions.

Submodules
----------
model        coefficient sets, scale regimes, assumption checks
torus        periodic cell solvers and effective dynamics
variational  actions, local rates, quasipotentials, subsolutions
engine       controlled sampler and estimators
experiments  built-in example models and closed forms
cli          command-line frontend
"""

from .errors import SlowFastError
from .model import CoefficientSet, GridSpec, ScaleRegime, ValidationReport, validate_model
from .torus import (
    EffectiveDynamics,
    TorusGrid,
    effective_coefficients,
    solve_cell_r1,
    solve_cell_r2,
    solve_cell_r3,
    solve_invariant_measure,
)

__version__ = "0.1.0"

__all__ = [
    "SlowFastError", "CoefficientSet", "GridSpec", "ScaleRegime", "ValidationReport",
    "validate_model", "EffectiveDynamics", "TorusGrid", "effective_coefficients",
    "solve_cell_r1", "solve_cell_r2", "solve_cell_r3", "solve_invariant_measure",
]
