"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class SlowFastError(Exception):
    """Base class for every error raised by the package."""


class ModelValidationError(SlowFastError):
    """A coefficient produced a non-finite value or violated a hard check."""


class CenteringError(SlowFastError):
    """The centering condition fails, so the corrector equation is inconsistent."""


class DegenerateGeneratorError(SlowFastError):
    """The adjoint of the fast generator has a null space of dimension above one."""


class SolverAccuracyError(SlowFastError):
    """A discrete solution violates a structural property (SPD, positivity).

    Usually cured by refining the torus grid.
    """


class InfeasibleHamiltonianError(SlowFastError):
    """No periodic first-order cell solution could be bracketed."""


class BoxWideningError(SlowFastError):
    """A box-constrained minimizer kept landing on the box boundary."""


class LatticeError(SlowFastError):
    """A control lattice was queried outside of its bounds."""


class DivergedTrajectoryError(SlowFastError):
    """A simulated state became non-finite.

    Parameters
    ----------
    step : int
        Index of the Euler step at which the state left the finite range.
    path : int
        Global path index.
    """

    def __init__(self, step: int, path: int = 0):
        super().__init__(f"trajectory {path} diverged at step {step}")
        self.step = step
        self.path = path


class EstimationError(SlowFastError):
    """Monte Carlo estimation produced no usable sample."""


class ConfigError(SlowFastError):
    """Malformed or inconsistent run configuration."""
