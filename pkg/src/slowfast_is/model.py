"""Slow-fast model definitions, scale regimes and assumption checks.

The slow-fast system is

    dX = [(eps/delta) b(X, Y) + c(X, Y)] ds + sqrt(eps) sigma(X, Y) dW
    dY = (1/delta) [(eps/delta) f(X, Y) + g(X, Y)] ds
         + (sqrt(eps)/delta) [tau1(X, Y) dW + tau2(X, Y) dB]

with X in R^m, Y on a one-dimensional torus of period ``period`` and W, B
independent kappa-dimensional Brownian motions.

Coefficient evaluators are vectorized: ``x`` has shape ``(..., m)`` and ``y``
shape ``(...)``.  Return shapes are ``(..., m)`` for b and c, ``(..., m, kappa)``
for sigma, ``(...)`` for f and g, and ``(..., kappa)`` for tau1 and tau2.
Scalars or arrays broadcastable to those shapes are accepted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import ModelValidationError

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]

COEFFICIENT_NAMES = ("b", "c", "sigma", "f", "g", "tau1", "tau2")


@dataclass(frozen=True)
class CoefficientSet:
    """Coefficients of a slow-fast SDE with a one-dimensional periodic fast variable.

    Parameters
    ----------
    m : int
        Slow dimension.
    kappa : int
        Dimension of each of the two driving Brownian motions.
    period : float
        Period of the fast cell.
    b, c, sigma, f, g, tau1, tau2 : callable
        Vectorized evaluators, see the module docstring for shapes.
    d_minus_m : int
        Fast dimension.  Only 1 is supported by the solvers.
    drift_modifier : callable, optional
        ``(eps, x, y) -> (..., m)`` extra slow drift that depends on eps.  It
        is added to ``c`` by the integrator only and never enters the cell
        problems.
    name : str
        Label used in reports.
    """

    m: int
    kappa: int
    period: float
    b: Evaluator
    c: Evaluator
    sigma: Evaluator
    f: Evaluator
    g: Evaluator
    tau1: Evaluator
    tau2: Evaluator
    d_minus_m: int = 1
    drift_modifier: Optional[Callable[[float, np.ndarray, np.ndarray], np.ndarray]] = None
    name: str = "custom"

    def __post_init__(self):
        if self.m < 1 or self.kappa < 1:
            raise ValueError("m and kappa must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive (use inf for a non-periodic fast variable)")

    def evaluate(self, x, y) -> "CoefficientValues":
        """Evaluate all coefficients with normalized output shapes.

        Parameters
        ----------
        x : array_like, shape (..., m) or (m,)
            Slow state.  Broadcast against ``y``.
        y : array_like, shape (...)
            Fast state (need not be reduced modulo the period).
        """
        y = np.asarray(y, dtype=float)
        x = np.broadcast_to(np.asarray(x, dtype=float), y.shape + (self.m,))
        lead = y.shape
        m, k = self.m, self.kappa

        def shaped(fn, shape):
            return np.broadcast_to(np.asarray(fn(x, y), dtype=float), lead + shape)

        return CoefficientValues(
            b=shaped(self.b, (m,)),
            c=shaped(self.c, (m,)),
            sigma=shaped(self.sigma, (m, k)),
            f=shaped(self.f, ()),
            g=shaped(self.g, ()),
            tau1=shaped(self.tau1, (k,)),
            tau2=shaped(self.tau2, (k,)),
        )

    def fast_diffusion(self, x, y) -> np.ndarray:
        """Return ``tau1 tau1^T + tau2 tau2^T`` (a scalar field for a 1D fast cell)."""
        v = self.evaluate(x, y)
        return np.sum(v.tau1**2, axis=-1) + np.sum(v.tau2**2, axis=-1)


@dataclass(frozen=True)
class CoefficientValues:
    """Coefficient arrays at a batch of points."""

    b: np.ndarray
    c: np.ndarray
    sigma: np.ndarray
    f: np.ndarray
    g: np.ndarray
    tau1: np.ndarray
    tau2: np.ndarray

    def items(self):
        return ((name, getattr(self, name)) for name in COEFFICIENT_NAMES)


@dataclass(frozen=True)
class ScaleRegime:
    """Interaction regime between the noise intensity and the fast time scale.

    Parameters
    ----------
    tag : {"R1", "R2", "R3"}
        ``R1``: eps/delta -> infinity, ``R2``: eps/delta -> gamma,
        ``R3``: eps/delta -> 0.
    gamma : float, optional
        Limit of eps/delta in R2; delta = eps/gamma.
    exponent : float, optional
        delta = eps**exponent in R1 (exponent > 1) and R3 (exponent < 1).
    """

    tag: str
    gamma: Optional[float] = None
    exponent: Optional[float] = None

    def __post_init__(self):
        if self.tag not in ("R1", "R2", "R3"):
            raise ValueError(f"unknown regime tag {self.tag!r}")
        if self.tag == "R2":
            if self.gamma is None or not self.gamma > 0:
                raise ValueError("R2 needs gamma > 0")
        else:
            if self.exponent is None:
                raise ValueError(f"{self.tag} needs an exponent")
            if self.tag == "R1" and not self.exponent > 1:
                raise ValueError("R1 needs exponent > 1")
            if self.tag == "R3" and not 0 < self.exponent < 1:
                raise ValueError("R3 needs 0 < exponent < 1")

    def delta(self, eps: float) -> float:
        if not eps > 0:
            raise ValueError("eps must be positive")
        if self.tag == "R2":
            return eps / self.gamma
        return eps**self.exponent

    def ratio(self, eps: float) -> float:
        """eps/delta(eps)."""
        return eps / self.delta(eps)


@dataclass(frozen=True)
class GridSpec:
    """Sampling resolution for model validation.

    Parameters
    ----------
    n_fast : int
        Points per fast period (at least 16).
    n_slow : int
        Points per slow dimension (at least 4).
    slow_box : tuple of float
        ``(lo, hi)`` applied to every slow coordinate.
    """

    n_fast: int = 64
    n_slow: int = 5
    slow_box: tuple = (-2.0, 2.0)

    def slow_points(self, m: int) -> np.ndarray:
        axis = np.linspace(self.slow_box[0], self.slow_box[1], self.n_slow)
        return np.array(list(itertools.product(axis, repeat=m)), dtype=float)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_model`.

    ``centering_residual`` holds max over sampled x of |int b dmu| per slow
    component and is ``None`` outside R1.
    """

    regime: str
    periodicity_ok: bool
    periodicity_error: float
    ellipticity_min: float
    bound_max: float
    centering_residual: Optional[np.ndarray] = None
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures

    def require_ok(self) -> None:
        if self.failures:
            raise ModelValidationError("; ".join(self.failures))

    def rows(self):
        """Key/value rows for CSV export."""
        cr = "" if self.centering_residual is None else float(np.max(self.centering_residual))
        return [
            ("regime", self.regime),
            ("periodicity_ok", self.periodicity_ok),
            ("periodicity_error", self.periodicity_error),
            ("ellipticity_min", self.ellipticity_min),
            ("bound_max", self.bound_max),
            ("centering_residual", cr),
            ("ok", self.ok),
            ("failures", " | ".join(self.failures)),
        ]


def validate_model(
    model: CoefficientSet,
    regime: ScaleRegime,
    grid_spec: GridSpec = GridSpec(),
    *,
    ell_tol: float = 1e-8,
    bound: float = 1e6,
    centering_tol: float = 1e-8,
) -> ValidationReport:
    """Check periodicity, ellipticity, boundedness and (R1) centering on a grid.

    Soft failures are collected in ``report.failures``.  A non-finite
    coefficient value raises immediately.

    Raises
    ------
    ModelValidationError
        If any coefficient is non-finite at a grid point.
    ValueError
        If the grid is too coarse or the fast dimension is not 1.
    """
    if grid_spec.n_fast < 16 or grid_spec.n_slow < 4:
        raise ValueError("validation grid needs >= 16 fast and >= 4 slow points")
    if model.d_minus_m != 1:
        raise ValueError("only a one-dimensional fast variable is supported")

    xs = grid_spec.slow_points(model.m)
    periodic = bool(np.isfinite(model.period))
    if periodic:
        ys = np.arange(grid_spec.n_fast) * (model.period / grid_spec.n_fast)
    else:
        ys = np.linspace(-3.0, 3.0, grid_spec.n_fast)
    X = np.repeat(xs, ys.size, axis=0)
    Y = np.tile(ys, xs.shape[0])

    base = model.evaluate(X, Y)
    shifted = model.evaluate(X, Y + model.period) if periodic else base
    failures = []
    per_err = 0.0
    bound_max = 0.0
    for (name, v), (_, w) in zip(base.items(), shifted.items()):
        for arr in (v, w):
            bad = ~np.isfinite(arr)
            if bad.any():
                i = np.argwhere(bad)[0][0]
                raise ModelValidationError(
                    f"coefficient {name} is not finite at x={X[i].tolist()}, y={Y[i]:.6g}"
                )
        scale = 1.0 + np.abs(v)
        per_err = max(per_err, float(np.max(np.abs(v - w) / scale)))
        bound_max = max(bound_max, float(np.max(np.abs(v))))
    periodicity_ok = periodic and per_err <= 1e-12
    if not periodic:
        per_err = float("nan")
        failures.append("fast variable is not periodic")
    elif not periodicity_ok:
        failures.append(f"periodicity violated (max relative gap {per_err:.3e})")

    ss = np.einsum("pik,pjk->pij", base.sigma, base.sigma)
    ell_slow = float(np.min(np.linalg.eigvalsh(ss)))
    a = np.sum(base.tau1**2, axis=-1) + np.sum(base.tau2**2, axis=-1)
    ell_fast = float(np.min(a))
    ellipticity_min = min(ell_slow, ell_fast)
    if ell_slow < ell_tol:
        failures.append(f"ellipticity violated: min eig(sigma sigma^T) = {ell_slow:.3e}")
    if ell_fast < ell_tol:
        failures.append(f"ellipticity violated: min(tau1 tau1^T + tau2 tau2^T) = {ell_fast:.3e}")
    if bound_max > bound:
        failures.append(f"coefficient magnitude {bound_max:.3e} exceeds bound {bound:.3e}")

    centering = None
    if regime.tag == "R1" and not np.any(base.b):
        centering = np.zeros(model.m)
    elif regime.tag == "R1" and ell_fast >= ell_tol and periodic:
        from .torus import TorusGrid, solve_invariant_measure

        n = max(256, 1 << int(np.ceil(np.log2(grid_spec.n_fast))))
        grid = TorusGrid(n, model.period)
        centering = np.zeros(model.m)
        for x in xs:
            mu = solve_invariant_measure(model, x, grid)
            bvals = model.evaluate(x, grid.nodes).b
            res = np.abs(grid.h * (mu.density @ bvals))
            centering = np.maximum(centering, res)
        if np.max(centering) > centering_tol:
            failures.append(f"centering violated: max |int b dmu| = {np.max(centering):.3e}")

    return ValidationReport(
        regime=regime.tag,
        periodicity_ok=periodicity_ok,
        periodicity_error=per_err,
        ellipticity_min=ellipticity_min,
        bound_max=bound_max,
        centering_residual=centering,
        failures=failures,
    )
