"""Finite-difference solvers on the one-dimensional periodic cell.

Contents: the invariant measure of the frozen fast generator, the corrector
of the linear cell problem and the resulting effective drift and diffusion,
the ergodic quadratic cell problem (via a Cole-Hopf eigenproblem) and its
first-order limit.

Grid operators use fourth-order central stencils by default; ``order=2``
selects the classical three-point stencils.
"""

from __future__ import annotations

import functools
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.interpolate import CubicSpline

from .errors import (
    CenteringError,
    DegenerateGeneratorError,
    InfeasibleHamiltonianError,
    SolverAccuracyError,
)
from .model import CoefficientSet

DEFAULT_N = 512


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid ``y_j = j h`` with ``h = period / n``."""

    n: int
    period: float = 1.0

    def __post_init__(self):
        n = self.n
        if n < 64 or n & (n - 1):
            raise ValueError(f"grid size must be a power of two >= 64, got {n}")
        if not self.period > 0:
            raise ValueError("period must be positive")

    @property
    def h(self) -> float:
        return self.period / self.n

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n) * self.h

    def d1(self, order: int = 4) -> np.ndarray:
        return _stencil_matrices(self.n, self.h, order)[0]

    def d2(self, order: int = 4) -> np.ndarray:
        return _stencil_matrices(self.n, self.h, order)[1]

    def diff(self, v: np.ndarray, order: int = 4) -> np.ndarray:
        """First derivative of a periodic grid function along axis 0."""
        h = self.h
        r = functools.partial(np.roll, v, axis=0)
        if order == 2:
            return (r(-1) - r(1)) / (2 * h)
        return (-r(-2) + 8 * r(-1) - 8 * r(1) + r(2)) / (12 * h)

    def diff2(self, v: np.ndarray, order: int = 4) -> np.ndarray:
        """Second derivative of a periodic grid function along axis 0."""
        h = self.h
        r = functools.partial(np.roll, v, axis=0)
        if order == 2:
            return (r(-1) - 2 * v + r(1)) / h**2
        return (-r(-2) + 16 * r(-1) - 30 * v + 16 * r(1) - r(2)) / (12 * h**2)

    def integrate(self, v: np.ndarray) -> np.ndarray:
        """Trapezoid rule over one period (exact for trigonometric polynomials of low degree)."""
        return self.h * np.sum(v, axis=0)


@functools.lru_cache(maxsize=16)
def _stencil_matrices(n: int, h: float, order: int):
    if order not in (2, 4):
        raise ValueError("stencil order must be 2 or 4")
    eye = np.eye(n)

    def shift(k):
        # (S_k v)_j = v_{j+k}
        return np.roll(eye, k, axis=1)

    if order == 2:
        d1 = (shift(1) - shift(-1)) / (2 * h)
        d2 = (shift(1) - 2 * eye + shift(-1)) / h**2
    else:
        d1 = (-shift(2) + 8 * shift(1) - 8 * shift(-1) + shift(-2)) / (12 * h)
        d2 = (-shift(2) + 16 * shift(1) - 30 * eye + 16 * shift(-1) - shift(-2)) / (12 * h**2)
    d1.setflags(write=False)
    d2.setflags(write=False)
    return d1, d2


def _check_fast_dim(model: CoefficientSet, grid: TorusGrid):
    if model.d_minus_m != 1:
        raise ValueError("only a one-dimensional fast variable is supported")
    if not np.isclose(grid.period, model.period, rtol=1e-14, atol=0):
        raise ValueError("grid period differs from model period")


def default_grid(model: CoefficientSet, n: int = DEFAULT_N) -> TorusGrid:
    return TorusGrid(n, model.period)


# ---------------------------------------------------------------------------
# invariant measure and linear corrector


@dataclass(frozen=True)
class InvariantMeasure:
    """Density of the invariant law of the frozen fast process at ``x_anchor``."""

    density: np.ndarray
    x_anchor: np.ndarray
    residual: float
    grid: TorusGrid


def fast_generator_matrix(model: CoefficientSet, x, grid: TorusGrid, order: int = 4) -> np.ndarray:
    """Dense matrix of ``f d/dy + (1/2) a d^2/dy^2`` at slow point ``x``."""
    _check_fast_dim(model, grid)
    v = model.evaluate(np.asarray(x, dtype=float), grid.nodes)
    a = np.sum(v.tau1**2, axis=-1) + np.sum(v.tau2**2, axis=-1)
    return v.f[:, None] * grid.d1(order) + 0.5 * a[:, None] * grid.d2(order)


def solve_invariant_measure(
    model: CoefficientSet,
    x,
    grid: TorusGrid,
    *,
    order: int = 4,
    null_tol: float = 1e-9,
) -> InvariantMeasure:
    """Normalized null vector of the adjoint of the discrete fast generator.

    Raises
    ------
    DegenerateGeneratorError
        If two singular values fall below ``null_tol`` times the largest.
    SolverAccuracyError
        If the null vector has a significantly negative entry.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    gen = fast_generator_matrix(model, x, grid, order)
    _, s, vt = linalg.svd(gen.T)
    if s[-2] <= null_tol * s[0]:
        raise DegenerateGeneratorError(
            f"adjoint generator has a degenerate null space at x={x.tolist()} "
            f"(singular values {s[-2]:.3e}, {s[-1]:.3e})"
        )
    mu = vt[-1].copy()
    if mu.sum() < 0:
        mu = -mu
    if mu.min() < -1e-10 * mu.max():
        raise SolverAccuracyError(
            f"invariant density has negative entries at x={x.tolist()}; refine the grid"
        )
    mu = np.clip(mu, 0.0, None)
    mu /= grid.h * mu.sum()
    residual = float(np.max(np.abs(gen.T @ mu)))
    mu.setflags(write=False)
    return InvariantMeasure(density=mu, x_anchor=x, residual=residual, grid=grid)


@dataclass(frozen=True)
class CellSolutionR1:
    """Corrector ``chi`` (one column per slow component) on the torus grid."""

    chi: np.ndarray
    dchi_dy: np.ndarray
    x_anchor: np.ndarray
    residual: float
    measure: InvariantMeasure

    @property
    def grid(self) -> TorusGrid:
        return self.measure.grid


def solve_cell_r1(
    model: CoefficientSet,
    x,
    grid: TorusGrid,
    *,
    measure: Optional[InvariantMeasure] = None,
    order: int = 4,
    centering_tol: float = 1e-8,
) -> CellSolutionR1:
    """Solve ``L chi = -b`` with ``int chi dmu = 0`` through a bordered system.

    Raises
    ------
    CenteringError
        If ``|int b dmu|`` exceeds ``centering_tol`` for some component.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if measure is None:
        measure = solve_invariant_measure(model, x, grid, order=order)
    n, h = grid.n, grid.h
    b = model.evaluate(x, grid.nodes).b
    mu = measure.density
    centering = np.abs(h * (mu @ b))
    if np.any(centering > centering_tol):
        raise CenteringError(
            f"centering condition fails at x={x.tolist()}: |int b dmu| = {centering.max():.3e}"
        )
    gen = fast_generator_matrix(model, x, grid, order)
    # Bordered system: the constant column spans a direction outside the range
    # of the generator, the last row imposes the normalization.
    border = np.zeros((n + 1, n + 1))
    border[:n, :n] = gen
    border[:n, n] = 1.0
    border[n, :n] = mu * h
    rhs = np.zeros((n + 1, model.m))
    rhs[:n] = -b
    sol = linalg.solve(border, rhs)
    chi = sol[:n]
    residual = float(np.max(np.abs(gen @ chi + b)))
    dchi = grid.diff(chi, 4)
    chi.setflags(write=False)
    dchi.setflags(write=False)
    return CellSolutionR1(chi=chi, dchi_dy=dchi, x_anchor=x, residual=residual, measure=measure)


def effective_from_cell(model: CoefficientSet, cell: CellSolutionR1):
    """Effective drift r and diffusion q from a corrector."""
    grid = cell.grid
    x = cell.x_anchor
    v = model.evaluate(x, grid.nodes)
    w = cell.measure.density * grid.h
    dchi = cell.dchi_dy  # (n, m)
    r = w @ (v.c + dchi * v.g[:, None])
    s1 = v.sigma + dchi[:, :, None] * v.tau1[:, None, :]
    s2 = dchi[:, :, None] * v.tau2[:, None, :]
    q = np.einsum("j,jik,jlk->il", w, s1, s1) + np.einsum("j,jik,jlk->il", w, s2, s2)
    q = 0.5 * (q + q.T)
    return r, q


def _require_spd(q: np.ndarray, where: str, tol: float = 1e-12) -> None:
    eig = np.linalg.eigvalsh(q)
    if not np.all(np.isfinite(eig)) or eig[0] <= tol * max(1.0, abs(eig[-1])):
        raise SolverAccuracyError(
            f"effective diffusion is not positive definite at {where} "
            f"(min eigenvalue {eig[0]:.3e}); refine the torus grid"
        )


def effective_coefficients(model: CoefficientSet, x, grid: Optional[TorusGrid] = None, *, order: int = 4):
    """Return ``(r, q)`` at slow point ``x``.

    Raises
    ------
    SolverAccuracyError
        If q is not symmetric positive definite.
    """
    grid = grid or default_grid(model)
    cell = solve_cell_r1(model, x, grid, order=order)
    r, q = effective_from_cell(model, cell)
    _require_spd(q, f"x={np.atleast_1d(x).tolist()}")
    return r, q


def _anchor_key(*arrays, quantum: float = 1e-12):
    return tuple(
        float(v) for a in arrays for v in np.round(np.atleast_1d(np.asarray(a, float)) / quantum)
    )


class EffectiveDynamics:
    """Effective drift ``r(x)`` and diffusion ``q(x)`` with memoization.

    Solutions are cached on ``x`` rounded to 1e-12.  Reads are lock free and
    inserts happen under a lock, so an instance can be shared by worker
    threads.

    Parameters
    ----------
    model : CoefficientSet, optional
        Model whose cell problems define the coefficients.
    grid : TorusGrid, optional
        Torus grid for the cell solves.
    constant : tuple, optional
        ``(r, q)`` for a constant-coefficient reduction; no model needed.
    """

    def __init__(self, model: Optional[CoefficientSet] = None, grid: Optional[TorusGrid] = None,
                 *, constant=None, order: int = 4):
        if (model is None) == (constant is None):
            raise ValueError("pass exactly one of model or constant")
        self.model = model
        self.order = order
        self.grid = grid if grid is not None or model is None else default_grid(model)
        self._cache: dict = {}
        self._lock = threading.Lock()
        self._constant = None
        if constant is not None:
            r, q = constant
            r = np.atleast_1d(np.asarray(r, dtype=float))
            q = np.atleast_2d(np.asarray(q, dtype=float))
            if q.shape != (r.size, r.size):
                raise ValueError("q must be an m x m matrix")
            q = 0.5 * (q + q.T)
            _require_spd(q, "constant input")
            self._constant = (r, q)

    @classmethod
    def from_constant(cls, r, q) -> "EffectiveDynamics":
        return cls(constant=(r, q))

    @property
    def m(self) -> int:
        return self._constant[0].size if self._constant else self.model.m

    @property
    def is_constant_input(self) -> bool:
        return self._constant is not None

    def _entry(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = _anchor_key(x)
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        cell = solve_cell_r1(self.model, x, self.grid, order=self.order)
        r, q = effective_from_cell(self.model, cell)
        _require_spd(q, f"x={x.tolist()}")
        r.setflags(write=False)
        q.setflags(write=False)
        entry = (r, q, cell)
        with self._lock:
            return self._cache.setdefault(key, entry)

    def r(self, x) -> np.ndarray:
        if self._constant:
            return self._constant[0]
        return self._entry(x)[0]

    def q(self, x) -> np.ndarray:
        if self._constant:
            return self._constant[1]
        return self._entry(x)[1]

    def cell(self, x) -> CellSolutionR1:
        if self._constant:
            raise ValueError("constant effective dynamics carry no cell solution")
        return self._entry(x)[2]

    def hamiltonian(self, x, p) -> float:
        """``<r, p> - p^T q p / 2``."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return float(self.r(x) @ p - 0.5 * p @ self.q(x) @ p)

    def is_constant(self, points, rtol: float = 1e-9) -> bool:
        """Whether r and q agree (to ``rtol``) at every sampled slow point."""
        if self._constant:
            return True
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r0, q0 = self.r(points[0]), self.q(points[0])
        scale = 1.0 + max(np.abs(r0).max(), np.abs(q0).max())
        for x in points[1:]:
            if np.abs(self.r(x) - r0).max() > rtol * scale or np.abs(self.q(x) - q0).max() > rtol * scale:
                return False
        return True


class TabulatedEffective(EffectiveDynamics):
    """Cubic-spline interpolant of ``r`` and ``q`` on a slow-variable axis (m = 1).

    The cell problem is solved once per node; queries outside the axis raise
    ``ValueError``.

    Parameters
    ----------
    source : EffectiveDynamics
        Model-backed effective dynamics with ``m == 1``.
    axis : array_like
        Strictly increasing nodes, at least 4.
    """

    def __init__(self, source: EffectiveDynamics, axis):
        if source.m != 1:
            raise ValueError("tabulation needs a one-dimensional slow variable")
        axis = np.asarray(axis, dtype=float)
        if axis.ndim != 1 or axis.size < 4 or np.any(np.diff(axis) <= 0):
            raise ValueError("axis must be strictly increasing with at least 4 nodes")
        self.model = source.model
        self.order = source.order
        self.grid = source.grid
        self._constant = None
        self._cache = {}
        self._lock = threading.Lock()
        self.axis = axis
        r = np.array([source.r(x[None])[0] for x in axis])
        q = np.array([source.q(x[None])[0, 0] for x in axis])
        if np.min(q) <= 0:
            raise DegenerateGeneratorError("effective diffusion is not positive on the axis")
        self._r = CubicSpline(axis, r)
        self._q = CubicSpline(axis, q)

    def _entry(self, x):
        x = float(np.atleast_1d(np.asarray(x, dtype=float))[0])
        if not self.axis[0] <= x <= self.axis[-1]:
            raise ValueError(f"x = {x} lies outside the tabulated range "
                             f"[{self.axis[0]}, {self.axis[-1]}]")
        return np.array([float(self._r(x))]), np.array([[float(self._q(x))]]), None

    def cell(self, x):
        raise ValueError("tabulated effective dynamics carry no cell solution")


# ---------------------------------------------------------------------------
# quadratic cell problems (gamma > 0 and gamma = 0)


def _hjb_cell_terms(model: CoefficientSet, x, p, gamma: float, grid: TorusGrid):
    """Return ``(a, B, V)`` so that the cell equation reads
    ``gamma a xi''/2 + B xi' - a xi'^2/2 + V = H``."""
    v = model.evaluate(x, grid.nodes)
    a = np.sum(v.tau1**2, axis=-1) + np.sum(v.tau2**2, axis=-1)
    sp = np.einsum("jik,i->jk", v.sigma, p)  # sigma^T p at every node, (n, kappa)
    B = gamma * v.f + v.g - np.sum(v.tau1 * sp, axis=-1)
    V = (gamma * v.b + v.c) @ p - 0.5 * np.sum(sp**2, axis=-1)
    return a, B, V


@dataclass(frozen=True)
class CellSolutionR2:
    """Periodic solution ``xi`` of the ergodic cell problem and its constant ``h_bar``."""

    xi: np.ndarray
    dxi_dy: np.ndarray
    h_bar: float
    x: np.ndarray
    p: np.ndarray
    gamma: float
    residual: float
    iterations: int
    grid: TorusGrid


def cell_residual_r2(model, x, p, gamma, grid, xi, h_bar, order: int = 4) -> np.ndarray:
    """Pointwise residual of the ergodic cell equation for a grid function ``xi``."""
    x = np.atleast_1d(np.asarray(x, float))
    p = np.atleast_1d(np.asarray(p, float))
    a, B, V = _hjb_cell_terms(model, x, p, gamma, grid)
    d1 = grid.diff(xi, order)
    d2 = grid.diff2(xi, order)
    return 0.5 * gamma * a * d2 + B * d1 - 0.5 * a * d1**2 + V - h_bar


def _principal_pair(kmat: np.ndarray):
    vals, vecs = linalg.eig(kmat)
    k = int(np.argmin(vals.real))
    lam = vals[k]
    scale = max(1.0, float(np.max(np.abs(vals.real))))
    if abs(lam.imag) > 1e-8 * scale:
        raise SolverAccuracyError("principal eigenvalue is not real; refine the torus grid")
    vec = vecs[:, k]
    vec = vec / vec[np.argmax(np.abs(vec))]
    w = vec.real
    if w.min() <= 0:
        raise SolverAccuracyError(
            "principal eigenfunction changes sign; refine the torus grid"
        )
    return float(lam.real), w


def solve_cell_r2(
    model: CoefficientSet,
    x,
    p,
    gamma: float,
    grid: TorusGrid,
    *,
    order: int = 4,
    gauge: Optional[np.ndarray] = None,
    tol: float = 1e-11,
    max_iter: int = 12,
    residual_tol: float = 1e-6,
) -> CellSolutionR2:
    """Solve the ergodic cell problem through its Cole-Hopf eigenproblem.

    With ``w = exp(-xi/gamma)`` the cell equation becomes the linear problem
    ``-gamma^2 a w''/2 - gamma B w' + V w = H w``.  For small gamma ``w`` is
    badly scaled, so the problem is solved for ``v = w exp(phi/gamma)`` with a
    gauge ``phi`` close to ``xi``; the gauge is then replaced by the new
    ``xi`` until it stops moving.  The initial gauge is the first-order cell
    solution when it exists, and zero otherwise.

    Raises
    ------
    ValueError
        If ``gamma <= 0``.
    SolverAccuracyError
        If the principal eigenfunction changes sign or the final residual
        exceeds ``residual_tol`` (scaled by the size of the equation terms).
    """
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    _check_fast_dim(model, grid)
    x = np.atleast_1d(np.asarray(x, float))
    p = np.atleast_1d(np.asarray(p, float))
    a, B, V = _hjb_cell_terms(model, x, p, gamma, grid)
    user_gauge = gauge is not None
    if gauge is None:
        try:
            r3 = solve_cell_r3(model, x, p, grid)
            phi = np.array(r3.xi0) if not r3.branch_switch else np.zeros(grid.n)
        except InfeasibleHamiltonianError:
            phi = np.zeros(grid.n)
    else:
        phi = np.array(gauge, dtype=float)
    try:
        return _gauge_iteration(model, x, p, gamma, grid, a, B, V, phi, order, tol, max_iter,
                                residual_tol)
    except SolverAccuracyError:
        if user_gauge or gamma >= 1.0:
            raise
    # continuation: borrow the gauge from a ten times larger gamma
    coarse = solve_cell_r2(model, x, p, min(10.0 * gamma, 1.0), grid, order=order, tol=tol,
                           max_iter=max_iter, residual_tol=residual_tol)
    return _gauge_iteration(model, x, p, gamma, grid, a, B, V, np.array(coarse.xi), order, tol,
                            max_iter, residual_tol)


def _gauge_iteration(model, x, p, gamma, grid, a, B, V, phi, order, tol, max_iter, residual_tol):
    d1m, d2m = grid.d1(order), grid.d2(order)

    scale = 1.0 + np.max(np.abs(V)) + np.max(np.abs(B)) ** 2 / np.min(a)
    h_bar = np.nan
    it = 0
    for it in range(1, max_iter + 1):
        dphi = grid.diff(phi, order)
        d2phi = grid.diff2(phi, order)
        b_eff = B - a * dphi
        v_eff = 0.5 * gamma * a * d2phi + B * dphi - 0.5 * a * dphi**2 + V
        kmat = (-0.5 * gamma**2 * a)[:, None] * d2m - (gamma * b_eff)[:, None] * d1m
        kmat[np.diag_indices_from(kmat)] += v_eff
        h_bar, w = _principal_pair(kmat)
        xi = phi - gamma * np.log(w)
        xi -= xi[0]
        change = float(np.max(np.abs(xi - phi)))
        phi = xi
        if change <= tol * (1.0 + np.max(np.abs(xi))):
            break

    dxi = grid.diff(phi, 4)
    res = cell_residual_r2(model, x, p, gamma, grid, phi, h_bar, order)
    residual = float(np.max(np.abs(res)))
    if residual > residual_tol * scale:
        raise SolverAccuracyError(
            f"cell residual {residual:.3e} above tolerance at x={x.tolist()}, p={p.tolist()}, "
            f"gamma={gamma}; refine the torus grid"
        )
    phi.setflags(write=False)
    dxi.setflags(write=False)
    return CellSolutionR2(xi=phi, dxi_dy=dxi, h_bar=h_bar, x=x, p=p, gamma=float(gamma),
                          residual=residual, iterations=it, grid=grid)


@dataclass(frozen=True)
class CellSolutionR3:
    """Solution of the first-order cell problem.

    ``branch_switch`` is set when no single root branch closes the period;
    then ``h_bar0`` is the critical value and ``dxi0_dy`` jumps at
    ``switch_index``.
    """

    xi0: np.ndarray
    dxi0_dy: np.ndarray
    h_bar0: float
    x: np.ndarray
    p: np.ndarray
    residual: float
    branch: int
    branch_switch: bool
    switch_index: Optional[int]
    grid: TorusGrid


def _roots(a, B, V, H, sign):
    disc = np.maximum(B**2 + 2 * a * (V - H), 0.0)
    return (B + sign * np.sqrt(disc)) / a


def _bracket(fun, h_star, sign, scale):
    """Find ``lo < h_star`` with ``sign * fun(lo) >= 0``."""
    step = scale
    for _ in range(80):
        lo = h_star - step
        if sign * fun(lo) >= 0:
            return lo
        step *= 2.0
    raise InfeasibleHamiltonianError("could not bracket the first-order cell constant")


def solve_cell_r3(model: CoefficientSet, x, p, grid: TorusGrid) -> CellSolutionR3:
    """Solve ``B xi' - a xi'^2/2 + V = H`` for a periodic ``xi`` and the constant ``H``.

    The equation is quadratic in ``xi'`` at every node.  On a fixed root
    branch the period integral of ``xi'`` is monotone in ``H``, so ``H`` is
    located by Brent's method.  If neither branch closes the period the
    constant is the critical value where the discriminant first touches zero,
    and the branches are joined at one switch node.

    Raises
    ------
    InfeasibleHamiltonianError
        If no bracket can be found.
    """
    _check_fast_dim(model, grid)
    x = np.atleast_1d(np.asarray(x, float))
    p = np.atleast_1d(np.asarray(p, float))
    a, B, V = _hjb_cell_terms(model, x, p, 0.0, grid)
    if np.min(a) <= 0:
        raise ValueError("fast diffusion must be positive on the cell")
    h_star = float(np.min(V + B**2 / (2 * a)))
    scale = 1.0 + float(np.max(np.abs(V)) + np.max(B**2 / a))

    def total(H, sign):
        return grid.integrate(_roots(a, B, V, H, sign))

    f_plus, f_minus = total(h_star, 1), total(h_star, -1)
    tol_zero = 1e-14 * scale * grid.period
    switch_index = None
    if f_plus <= tol_zero or f_minus >= -tol_zero:
        sign = 1 if f_plus <= tol_zero else -1
        if abs(total(h_star, sign)) <= tol_zero:
            h_bar = h_star
        else:
            lo = _bracket(lambda H: total(H, sign), h_star, sign, scale)
            h_bar = optimize.brentq(lambda H: total(H, sign), lo, h_star, xtol=1e-15, rtol=1e-15,
                                    maxiter=500)
        z = _roots(a, B, V, h_bar, sign)
        switched = False
        xi = _periodic_antiderivative(z, grid)
    else:
        # Critical case: follow the upper branch from the tangency node for k
        # nodes, then the lower branch; k closes the period as nearly as the
        # grid allows and the last upper node absorbs the remainder.
        h_bar = h_star
        sign = 0
        switched = True
        zp, zm = _roots(a, B, V, h_bar, 1), _roots(a, B, V, h_bar, -1)
        j0 = int(np.argmin(V + B**2 / (2 * a)))
        order_idx = (j0 + np.arange(grid.n)) % grid.n
        sums = np.concatenate([[0.0], np.cumsum(zp[order_idx] - zm[order_idx])])
        base = zm.sum()
        k = int(np.searchsorted(sums + base, 0.0))
        k = min(max(k, 1), grid.n)
        z = zm.copy()
        z[order_idx[:k]] = zp[order_idx[:k]]
        z[order_idx[k - 1]] -= z.sum()
        switch_index = int(order_idx[k - 1])
        xi = np.concatenate([[0.0], np.cumsum(0.5 * (z[:-1] + z[1:]) * grid.h)])
    xi = xi - xi[0]
    res = -0.5 * a * z**2 + B * z + V - h_bar
    if switched:
        res[switch_index] = 0.0
    z.setflags(write=False)
    xi.setflags(write=False)
    return CellSolutionR3(xi0=xi, dxi0_dy=z, h_bar0=float(h_bar), x=x, p=p,
                          residual=float(np.max(np.abs(res))), branch=sign,
                          branch_switch=switched, switch_index=switch_index, grid=grid)


def _periodic_antiderivative(z: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Antiderivative of a smooth periodic grid function with zero mean."""
    nodes = np.append(grid.nodes, grid.period)
    zz = np.append(z, z[0])
    spline = CubicSpline(nodes, zz, bc_type="periodic")
    return spline.antiderivative()(grid.nodes)


# ---------------------------------------------------------------------------
# memoized providers


class CellCache:
    """Thread-safe memo of cell solutions keyed by quantized anchors."""

    def __init__(self, solver, quantum: float = 1e-12):
        self._solver = solver
        self._quantum = quantum
        self._store: dict = {}
        self._lock = threading.Lock()

    def __call__(self, *anchors):
        key = _anchor_key(*anchors, quantum=self._quantum)
        hit = self._store.get(key)
        if hit is not None:
            return hit
        value = self._solver(*anchors)
        with self._lock:
            return self._store.setdefault(key, value)

    def __len__(self):
        return len(self._store)


def cell_provider_r1(model: CoefficientSet, grid: TorusGrid, **kw) -> CellCache:
    return CellCache(lambda x: solve_cell_r1(model, x, grid, **kw))


def cell_provider_r2(model: CoefficientSet, gamma: float, grid: TorusGrid, **kw) -> CellCache:
    return CellCache(lambda x, p: solve_cell_r2(model, x, p, gamma, grid, **kw))


def cell_provider_r3(model: CoefficientSet, grid: TorusGrid) -> CellCache:
    return CellCache(lambda x, p: solve_cell_r3(model, x, p, grid))


@dataclass
class HamiltonianR2:
    """Effective Hamiltonian backed by the ergodic cell solver (gamma > 0) or
    the first-order solver (gamma = 0)."""

    model: CoefficientSet
    gamma: float
    grid: TorusGrid
    _cache: CellCache = field(init=False, repr=False)

    def __post_init__(self):
        if self.gamma > 0:
            self._cache = cell_provider_r2(self.model, self.gamma, self.grid)
        else:
            self._cache = cell_provider_r3(self.model, self.grid)

    def __call__(self, x, p) -> float:
        sol = self._cache(x, p)
        return sol.h_bar if self.gamma > 0 else sol.h_bar0
