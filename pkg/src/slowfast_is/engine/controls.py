"""Feedback controls for the importance-sampling change of measure.

A control maps ``(s, x, y)`` to ``(u1, u2)``, each of shape ``(P, kappa)``
for a batch of ``P`` states.  Regime-specific constructors combine the
gradient of a subsolution with tabulated cell solutions.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from ..errors import LatticeError
from ..model import CoefficientSet, CoefficientValues
from ..torus import TorusGrid
from ..variational import Subsolution
from . import kernels


@dataclass
class ControlPolicy:
    """Feedback control with a label describing what backs it.

    Parameters
    ----------
    regime : str
        ``R1``, ``R2``, ``R3`` or ``none`` for the zero control.
    evaluator : callable
        ``(s, x, y, coeffs) -> (u1, u2)``; ``coeffs`` are the model values at
        ``(x, y)`` (already computed by the integrator) or ``None``.
    kappa : int
    provenance : str
    is_zero : bool
        Marks the plain Monte Carlo policy, which skips all control work.
    """

    regime: str
    evaluator: Callable
    kappa: int
    provenance: str = ""
    is_zero: bool = False

    def __call__(self, s, x, y, coeffs: Optional[CoefficientValues] = None):
        x = np.atleast_2d(np.asarray(x, float))
        y = np.atleast_1d(np.asarray(y, float))
        return self.evaluator(s, x, y, coeffs)

    def sup_norm(self, model: CoefficientSet, box, times, n_x: int = 9, n_y: int = 16) -> float:
        """Sampled sup-norm of ``|(u1, u2)|`` over ``times x box x cell``."""
        lo, hi = (np.atleast_1d(np.asarray(b, float)) for b in box)
        axes = [np.linspace(l, h, n_x) for l, h in zip(lo, hi)]
        xs = np.array(np.meshgrid(*axes, indexing="ij")).reshape(len(axes), -1).T
        period = model.period if np.isfinite(model.period) else 6.0
        ys = np.arange(n_y) * period / n_y
        X = np.repeat(xs, ys.size, axis=0)
        Y = np.tile(ys, xs.shape[0])
        worst = 0.0
        for s in np.atleast_1d(times):
            u1, u2 = self(s, X, Y, model.evaluate(X, Y))
            worst = max(worst, float(np.max(np.sqrt(np.sum(u1**2, 1) + np.sum(u2**2, 1)))))
        return worst


def zero_policy(kappa: int) -> ControlPolicy:
    """The control ``u = 0`` (plain Monte Carlo)."""

    def ev(s, x, y, coeffs):
        z = np.zeros((y.shape[0], kappa))
        return z, z.copy()

    return ControlPolicy("none", ev, kappa, "zero control", is_zero=True)


def constant_policy(u1, u2) -> ControlPolicy:
    """A control that ignores the state."""
    u1 = np.atleast_1d(np.asarray(u1, float))
    u2 = np.atleast_1d(np.asarray(u2, float))

    def ev(s, x, y, coeffs):
        n = y.shape[0]
        return np.tile(u1, (n, 1)), np.tile(u2, (n, 1))

    return ControlPolicy("const", ev, u1.size, f"constant {u1.tolist()}, {u2.tolist()}")


class PeriodicTable:
    """Periodic cubic splines of several grid functions on one torus grid."""

    def __init__(self, values: np.ndarray, grid: TorusGrid):
        values = np.atleast_2d(np.asarray(values, float))  # (K, n)
        nodes = np.append(grid.nodes, grid.period)
        closed = np.concatenate([values, values[:, :1]], axis=1)
        spline = CubicSpline(nodes, closed, axis=1, bc_type="periodic")
        # spline.c has shape (4, n, K)
        self.coef = np.ascontiguousarray(np.transpose(spline.c, (2, 0, 1)))
        self.period = float(grid.period)
        self.size = values.shape[0]

    def __call__(self, idx, y) -> np.ndarray:
        idx = np.ascontiguousarray(np.broadcast_to(np.asarray(idx, np.int64), np.shape(y)))
        y = np.ascontiguousarray(y, dtype=float)
        out = np.empty(y.shape[0])
        return kernels.periodic_cubic(self.coef, idx, y, self.period, out)


def _fast_part_x_independent(model: CoefficientSet, names, xs, grid: TorusGrid) -> bool:
    ref = model.evaluate(xs[0], grid.nodes)
    for x in xs[1:]:
        v = model.evaluate(x, grid.nodes)
        for name in names:
            if not np.allclose(getattr(v, name), getattr(ref, name), rtol=1e-13, atol=1e-13):
                return False
    return True


def _probe_points(m: int) -> np.ndarray:
    return np.array([np.full(m, v) for v in (-1.7, -0.3, 0.0, 0.9, 2.3)])


class _Lattice:
    """Linear interpolation over an axis of anchors, periodic cubic in y.

    ``axes`` is a list of 1D increasing arrays; ``tables`` stores one grid
    function per lattice node (flattened in C order).
    """

    def __init__(self, axes, values, grid: TorusGrid, label: str):
        self.axes = [np.asarray(a, float) for a in axes]
        self.shape = tuple(a.size for a in self.axes)
        self.table = PeriodicTable(values.reshape(-1, grid.n), grid)
        self.label = label

    def __call__(self, coords, y):
        """``coords``: (P, d) query anchors; returns interpolated values at y."""
        P = y.shape[0]
        lows, weights = [], []
        for d, ax in enumerate(self.axes):
            c = coords[:, d]
            if ax.size == 1:
                lows.append(np.zeros(P, np.int64))
                weights.append(np.zeros(P))
                continue
            if np.any(c < ax[0] - 1e-12) or np.any(c > ax[-1] + 1e-12):
                bad = c[(c < ax[0]) | (c > ax[-1])][0]
                raise LatticeError(
                    f"{self.label} lattice axis {d} covers [{ax[0]:.4g}, {ax[-1]:.4g}] but was "
                    f"queried at {bad:.4g}; extend the lattice"
                )
            i = np.clip(np.searchsorted(ax, c, side="right") - 1, 0, ax.size - 2)
            lows.append(i)
            weights.append((c - ax[i]) / (ax[i + 1] - ax[i]))
        out = np.zeros(P)
        dims = len(self.axes)
        for corner in range(1 << dims):
            w = np.ones(P)
            flat = np.zeros(P, np.int64)
            for d in range(dims):
                up = (corner >> d) & 1
                if self.shape[d] == 1 and up:
                    w = None
                    break
                w = w * (weights[d] if up else 1.0 - weights[d])
                flat = flat * self.shape[d] + lows[d] + up
            if w is None:
                continue
            out += w * self.table(flat, y)
        return out


def make_control_r1(sub: Subsolution, cell_provider, model: CoefficientSet, *,
                    grid: Optional[TorusGrid] = None, x_lattice=None) -> ControlPolicy:
    """Control ``(-(sigma + chi' tau1)^T DU, -(chi' tau2)^T DU)``.

    When the fast coefficients (b, f, tau1, tau2) do not depend on x the
    corrector is solved once.  Otherwise pass ``x_lattice`` (1D array, m = 1)
    and the corrector derivative is interpolated linearly in x.  With
    ``cell_provider=None`` the model must have ``b = 0``, so that the
    corrector vanishes; this also covers fast variables on the real line.

    Raises
    ------
    ValueError
        If the corrector depends on x and no lattice was supplied, or no
        provider is given for a model with nonzero b.
    """
    m, k = model.m, model.kappa
    if cell_provider is None:
        ys = (np.linspace(0.0, model.period, 64, endpoint=False) if np.isfinite(model.period)
              else np.linspace(-4.0, 4.0, 64))
        if any(np.any(model.evaluate(x, ys).b) for x in _probe_points(m)):
            raise ValueError("a cell provider is needed when b is not identically zero")

        def dchi_at(x, y):
            return np.zeros((y.shape[0], m))
    elif x_lattice is None:
        if grid is None:
            grid = cell_provider(np.zeros(m)).grid
        if not _fast_part_x_independent(model, ("b", "f", "tau1", "tau2"), _probe_points(m), grid):
            raise ValueError("corrector depends on x; supply x_lattice")
        cell = cell_provider(np.zeros(m))
        table = PeriodicTable(cell.dchi_dy.T, cell.grid)

        def dchi_at(x, y):
            return np.stack([table(np.full(y.shape[0], i), y) for i in range(m)], axis=1)
    else:
        if m != 1:
            raise NotImplementedError("x lattices are supported for one slow dimension")
        xl = np.asarray(x_lattice, float)
        cells = [cell_provider(np.array([v])) for v in xl]
        lat = _Lattice([xl], np.array([c.dchi_dy[:, 0] for c in cells]), cells[0].grid, "x")

        def dchi_at(x, y):
            return lat(x, y)[:, None]

    def ev(s, x, y, coeffs):
        if coeffs is None:
            coeffs = model.evaluate(x, y)
        grad = sub.grad_x(s, x)
        dchi = dchi_at(x, y)
        s1 = coeffs.sigma + dchi[:, :, None] * coeffs.tau1[:, None, :]
        u1 = -np.einsum("pik,pi->pk", s1, grad)
        u2 = -np.einsum("pi,pk->pk", dchi * grad, coeffs.tau2)
        return u1, u2

    what = "corrector" if cell_provider is not None else "zero-corrector"
    return ControlPolicy("R1", ev, k, f"R1 {what} control from subsolution '{sub.name}'")


def gradient_range(sub: Subsolution, box, t0: float, n_t: int = 9, n_x: int = 33, pad: float = 0.1):
    """Range of ``DU`` (m = 1) over ``[t0, T] x box``, padded by ``pad`` of its width."""
    lo, hi = (float(np.atleast_1d(b)[0]) for b in box)
    xs = np.linspace(lo, hi, n_x)[:, None]
    vals = np.concatenate([sub.grad_x(t, xs)[:, 0] for t in np.linspace(t0, sub.T, n_t)])
    a, b = float(np.min(vals)), float(np.max(vals))
    width = max(b - a, 1e-3 * (1.0 + abs(a) + abs(b)))
    return a - pad * width, b + pad * width


def _make_xi_control(regime, sub, cell_provider, model, p_range, n_p, x_lattice, attr, grid):
    if model.m != 1:
        raise NotImplementedError("lattice controls are supported for one slow dimension")
    k = model.kappa
    p_axis = np.linspace(p_range[0], p_range[1], n_p)
    if x_lattice is None:
        if grid is None:
            grid = getattr(cell_provider(np.zeros(1), np.array([p_axis[0]])), "grid")
        if not _fast_part_x_independent(model, ("b", "c", "sigma", "f", "g", "tau1", "tau2"),
                                        _probe_points(1), grid):
            raise ValueError("cell solutions depend on x; supply x_lattice")
        x_axis = np.zeros(1)
    else:
        x_axis = np.asarray(x_lattice, float)
    sols = [[cell_provider(np.array([xv]), np.array([pv])) for pv in p_axis] for xv in x_axis]
    values = np.array([[getattr(s, attr) for s in row] for row in sols])
    lat = _Lattice([x_axis, p_axis], values, sols[0][0].grid, "(x, p)")

    def ev(s, x, y, coeffs):
        if coeffs is None:
            coeffs = model.evaluate(x, y)
        p = sub.grad_x(s, x)
        dxi = lat(np.column_stack([x[:, 0], p[:, 0]]), y)
        sp = np.einsum("pik,pi->pk", coeffs.sigma, p)
        u1 = -sp - coeffs.tau1 * dxi[:, None]
        u2 = -coeffs.tau2 * dxi[:, None]
        return u1, u2

    return ControlPolicy(regime, ev, k,
                         f"{regime} cell control from subsolution '{sub.name}', p in "
                         f"[{p_axis[0]:.4g}, {p_axis[-1]:.4g}] ({n_p} nodes)")


def make_control_r2(sub: Subsolution, cell_provider, model: CoefficientSet, gamma: float, *,
                    p_range, n_p: int = 41, x_lattice=None, grid=None) -> ControlPolicy:
    """Control ``(-sigma^T DU - tau1^T xi', -tau2^T xi')`` with ``xi`` the
    ergodic cell solution at ``p = DU``, tabulated on a p lattice (and an x
    lattice if the cell depends on x)."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    return _make_xi_control("R2", sub, cell_provider, model, p_range, n_p, x_lattice, "dxi_dy", grid)


def make_control_r3(sub: Subsolution, cell_provider, model: CoefficientSet, *,
                    p_range, n_p: int = 41, x_lattice=None, grid=None) -> ControlPolicy:
    """As :func:`make_control_r2` with the first-order cell solution."""
    return _make_xi_control("R3", sub, cell_provider, model, p_range, n_p, x_lattice, "dxi0_dy", grid)
