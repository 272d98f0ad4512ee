"""Action functionals, local rates, quasipotentials and subsolutions.

Conventions: slow points are arrays of shape ``(..., m)``; times are scalars
or arrays broadcastable against the leading shape of ``x``.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import interpolate, linalg, optimize

from .errors import BoxWideningError, SlowFastError, SolverAccuracyError
from .model import CoefficientSet
from .torus import EffectiveDynamics, TorusGrid, solve_cell_r1

log = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# terminal costs


class TerminalCost:
    """Terminal cost ``h``.

    Subclasses with ``grad`` and ``hess`` let the Hopf-Lax subsolution locate
    its minimizers with vectorized Newton steps; plain callables fall back to
    derivative-free search.
    """

    smooth = False

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x) -> np.ndarray:
        raise NotImplementedError


class QuadraticCost(TerminalCost):
    """``h(x) = (x - center)^T A (x - center) + offset`` with ``A`` symmetric."""

    smooth = True

    def __init__(self, center, weight=1.0, offset: float = 0.0):
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        m = self.center.size
        w = np.asarray(weight, dtype=float)
        self.A = w * np.eye(m) if w.ndim == 0 else 0.5 * (w + w.T)
        self.offset = float(offset)

    def __call__(self, x):
        d = np.asarray(x, float) - self.center
        return np.einsum("...i,ij,...j->...", d, self.A, d) + self.offset

    def grad(self, x):
        return 2.0 * (np.asarray(x, float) - self.center) @ self.A

    def hess(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(2.0 * self.A, x.shape[:-1] + self.A.shape)


class LinearCost(TerminalCost):
    """``h(x) = <a, x> + offset``."""

    smooth = True

    def __init__(self, a, offset: float = 0.0):
        self.a = np.atleast_1d(np.asarray(a, dtype=float))
        self.offset = float(offset)

    def __call__(self, x):
        return np.asarray(x, float) @ self.a + self.offset

    def grad(self, x):
        x = np.asarray(x, float)
        return np.broadcast_to(self.a, x.shape)

    def hess(self, x):
        x = np.asarray(x, float)
        m = self.a.size
        return np.zeros(x.shape[:-1] + (m, m))


class ZeroCost(LinearCost):
    def __init__(self, m: int = 1):
        super().__init__(np.zeros(m))


class CallableCost(TerminalCost):
    """Wrap a vectorized function ``(..., m) -> (...)``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self.fn = fn

    def __call__(self, x):
        return self.fn(np.asarray(x, float))


# ---------------------------------------------------------------------------
# Hamiltonians


@dataclass
class HamiltonianHandle:
    """Effective Hamiltonian ``H(x, p)``.

    Parameters
    ----------
    regime : str
        ``R1``, ``R2`` or ``R3``.
    fn : callable
        ``(x, p) -> float`` for single points.
    batch : callable, optional
        Vectorized version ``((..., m), (..., m)) -> (...)``.
    """

    regime: str
    fn: Callable
    batch: Optional[Callable] = None

    def __call__(self, x, p) -> np.ndarray:
        x = np.asarray(x, float)
        p = np.asarray(p, float)
        if self.batch is not None:
            return self.batch(x, p)
        if x.ndim <= 1 and p.ndim <= 1:
            return np.asarray(self.fn(x, p))
        xb, pb = np.broadcast_arrays(np.atleast_2d(x), np.atleast_2d(p))
        lead = xb.shape[:-1]
        flat = [self.fn(xi, pi) for xi, pi in zip(xb.reshape(-1, xb.shape[-1]), pb.reshape(-1, pb.shape[-1]))]
        return np.asarray(flat).reshape(lead)

    def concavity_defect(self, x, p_grid) -> float:
        """Largest second difference of ``p -> H(x, p)`` along a 1D p-grid
        (rows of ``p_grid``, equally spaced).  Concavity means the value is
        ``<= 0`` up to rounding."""
        p_grid = np.atleast_2d(np.asarray(p_grid, float))
        vals = np.array([float(self(x, p)) for p in p_grid])
        return float(np.max(vals[2:] - 2 * vals[1:-1] + vals[:-2]))

    @classmethod
    def from_effective(cls, eff: EffectiveDynamics) -> "HamiltonianHandle":
        def fn(x, p):
            return eff.hamiltonian(x, p)

        batch = None
        if eff.is_constant_input:
            r, q = eff.r(None), eff.q(None)

            def batch(x, p):
                return p @ r - 0.5 * np.einsum("...i,ij,...j->...", p, q, p)

        return cls("R1", fn, batch)

    @classmethod
    def from_cells(cls, ham_r2, regime: str) -> "HamiltonianHandle":
        """Wrap a cell-backed Hamiltonian (see ``torus.HamiltonianR2``)."""
        return cls(regime, lambda x, p: ham_r2(x, p))


# ---------------------------------------------------------------------------
# action and local rates


@dataclass(frozen=True)
class DiscretePath:
    """Piecewise-linear path through ``nodes`` at ``times``."""

    times: np.ndarray
    nodes: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, float)
        z = np.asarray(self.nodes, float)
        if z.ndim == 1:
            z = z[:, None]
        if t.ndim != 1 or t.size < 2 or z.shape[0] != t.size:
            raise ValueError("a path needs at least two nodes and one time per node")
        if np.any(np.diff(t) <= 0):
            raise ValueError("times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "nodes", z)


def _inv_spd(q: np.ndarray, where: str) -> np.ndarray:
    try:
        c = linalg.cho_factor(q)
    except linalg.LinAlgError as exc:
        raise SolverAccuracyError(f"diffusion matrix not positive definite at {where}") from exc
    return linalg.cho_solve(c, np.eye(q.shape[0]))


def action_r1(path: DiscretePath, eff: EffectiveDynamics) -> float:
    """Midpoint rule for ``(1/2) int (phi' - r)^T q^{-1} (phi' - r) ds`` on the
    piecewise-linear interpolant."""
    dt = np.diff(path.times)
    vel = np.diff(path.nodes, axis=0) / dt[:, None]
    mids = 0.5 * (path.nodes[1:] + path.nodes[:-1])
    if eff.is_constant_input:
        r = eff.r(None)
        qinv = _inv_spd(eff.q(None), "constant q")
        d = vel - r
        return float(0.5 * np.sum(dt * np.einsum("ki,ij,kj->k", d, qinv, d)))
    total = 0.0
    for k, xm in enumerate(mids):
        d = vel[k] - eff.r(xm)
        total += 0.5 * dt[k] * d @ _inv_spd(eff.q(xm), f"x={xm.tolist()}") @ d
    return float(total)


def local_rate_r1(x, beta, eff: EffectiveDynamics) -> float:
    """``(1/2)(beta - r(x))^T q(x)^{-1} (beta - r(x))``."""
    beta = np.atleast_1d(np.asarray(beta, float))
    d = beta - eff.r(x)
    return float(0.5 * d @ _inv_spd(eff.q(x), f"x={np.atleast_1d(x).tolist()}") @ d)


def _control_blocks(model: CoefficientSet, x, cell):
    grid = cell.grid
    v = model.evaluate(np.atleast_1d(np.asarray(x, float)), grid.nodes)
    dchi = cell.dchi_dy
    s1 = v.sigma + dchi[:, :, None] * v.tau1[:, None, :]
    s2 = dchi[:, :, None] * v.tau2[:, None, :]
    drift = v.c + dchi * v.g[:, None]
    return s1, s2, drift


def local_rate_bruteforce_r1(x, beta, model: CoefficientSet, grid: TorusGrid, *,
                             return_controls: bool = False):
    """Minimize the averaged control energy over grid feedback controls.

    Solves the equality-constrained quadratic program

        min (1/2) sum_j (|v1_j|^2 + |v2_j|^2) mu_j h
        s.t. sum_j [c + chi' g + (sigma + chi' tau1) v1_j + chi' tau2 v2_j] mu_j h = beta

    through its full KKT system.

    Raises
    ------
    SlowFastError
        If the constraint matrix is rank deficient.
    """
    x = np.atleast_1d(np.asarray(x, float))
    beta = np.atleast_1d(np.asarray(beta, float))
    cell = solve_cell_r1(model, x, grid)
    s1, s2, drift = _control_blocks(model, x, cell)
    n, m, k = s1.shape
    w = cell.measure.density * grid.h
    blocks = np.concatenate([s1, s2], axis=2)  # (n, m, 2k)
    C = (w[:, None, None] * blocks).transpose(1, 0, 2).reshape(m, n * 2 * k)
    if np.linalg.matrix_rank(C) < m:
        raise SlowFastError("local-rate constraint is rank deficient (infeasible velocity set)")
    M = np.repeat(w, 2 * k)
    d = beta - w @ drift
    nv = n * 2 * k
    kkt = np.zeros((nv + m, nv + m))
    kkt[np.arange(nv), np.arange(nv)] = M
    kkt[:nv, nv:] = C.T
    kkt[nv:, :nv] = C
    rhs = np.concatenate([np.zeros(nv), d])
    sol = linalg.solve(kkt, rhs)
    v = sol[:nv]
    value = float(0.5 * np.sum(M * v**2))
    if not return_controls:
        return value
    v = v.reshape(n, 2 * k)
    return value, v[:, :k], v[:, k:]


def optimal_control_r1_ldp(x, beta, cell, eff: EffectiveDynamics, model: CoefficientSet):
    """Grid values of the minimizing controls of the local rate.

    Returns
    -------
    v1, v2 : ndarray, shape (n, kappa)
        ``(sigma + chi' tau1)^T q^{-1} (beta - r)`` and ``(chi' tau2)^T q^{-1} (beta - r)``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    beta = np.atleast_1d(np.asarray(beta, float))
    eta = _inv_spd(eff.q(x), f"x={x.tolist()}") @ (beta - eff.r(x))
    s1, s2, _ = _control_blocks(model, x, cell)
    return np.einsum("jik,i->jk", s1, eta), np.einsum("jik,i->jk", s2, eta)


def control_energy(v1, v2, cell) -> float:
    """Averaged energy ``(1/2) sum (|v1|^2 + |v2|^2) mu h`` of grid controls."""
    w = cell.measure.density * cell.grid.h
    return float(0.5 * w @ (np.sum(v1**2, axis=1) + np.sum(v2**2, axis=1)))


# ---------------------------------------------------------------------------
# quasipotential


def _constant_rq(eff: EffectiveDynamics, probe: Optional[np.ndarray] = None):
    if eff.is_constant_input:
        return eff.r(None), eff.q(None)
    if probe is None:
        raise ValueError("Hopf-Lax needs constant effective coefficients")
    if not eff.is_constant(probe):
        raise ValueError("effective coefficients vary over the probe points; Hopf-Lax does not apply")
    return eff.r(probe[0]), eff.q(probe[0])


def _box_minimize(fun, lo, hi, start):
    m = lo.size
    if m == 1:
        res = optimize.minimize_scalar(lambda z: fun(np.array([z])), bounds=(lo[0], hi[0]),
                                       method="bounded", options={"xatol": 1e-12, "maxiter": 2000})
        return np.array([res.x]), float(res.fun)
    res = optimize.minimize(fun, start, method="Nelder-Mead", bounds=list(zip(lo, hi)),
                            options={"xatol": 1e-11, "fatol": 1e-15, "maxiter": 40000})
    res = optimize.minimize(fun, res.x, method="Powell", bounds=list(zip(lo, hi)),
                            options={"xtol": 1e-12, "ftol": 1e-15, "maxiter": 40000})
    return np.asarray(res.x), float(res.fun)


def hopf_lax_value(t, x, h: TerminalCost, r, q, T: float, *, box=None, max_widenings: int = 3):
    """Derivative-free evaluation of the Hopf-Lax formula at one point.

    Returns ``(G, z_star)``.

    Raises
    ------
    BoxWideningError
        If the minimizer sits on the box boundary after ``max_widenings``
        enlargements.
    """
    x = np.atleast_1d(np.asarray(x, float))
    r = np.atleast_1d(r)
    q = np.atleast_2d(q)
    tau = T - t
    if tau < 0:
        raise ValueError("t must not exceed T")
    if tau == 0:
        return float(h(x)), x
    qinv = _inv_spd(q, "constant q")
    center = x + r * tau

    def fun(z):
        d = z - center
        return float(d @ qinv @ d / (2 * tau) + h(z))

    if box is None:
        half = np.full(x.size, 2.0 + 4.0 * np.sqrt(np.linalg.eigvalsh(q)[-1] * tau) + np.max(np.abs(x)))
        lo, hi = center - half, center + half
    else:
        lo, hi = (np.broadcast_to(np.asarray(b, float), x.shape).copy() for b in box)
    for attempt in range(max_widenings + 1):
        z, val = _box_minimize(fun, lo, hi, np.clip(center, lo, hi))
        width = hi - lo
        on_edge = np.any((z - lo < 1e-6 * width) | (hi - z < 1e-6 * width))
        if not on_edge:
            return val, z
        if attempt == max_widenings:
            break
        log.warning("Hopf-Lax minimizer on the box boundary; widening the box (attempt %d)", attempt + 1)
        mid = 0.5 * (lo + hi)
        lo, hi = mid - width, mid + width
    raise BoxWideningError(f"Hopf-Lax minimizer stays on the box boundary at x={x.tolist()}")


def path_opt_value(t, x, h: TerminalCost, eff: EffectiveDynamics, T: float, *, K: int = 16,
                   n_starts: int = 8, seed: int = 0, sweeps: int = 4):
    """Minimize ``action_r1 + h(phi_K)`` over piecewise-linear paths.

    ``K`` free nodes follow the fixed start node.  Each start runs
    ``sweeps`` rounds of coordinate descent (Brent line searches on single
    coordinates) followed by a Powell polish of all coordinates.  The best
    value wins; ties go to the lowest start index.

    Returns ``(value, DiscretePath)``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    m = x.size
    times = np.linspace(t, T, K + 1)
    rng = np.random.default_rng(seed)
    r0 = eff.r(x)
    spread = np.sqrt(np.max(np.linalg.eigvalsh(eff.q(x)))) * np.sqrt(T - t)

    dts = np.diff(times)
    if eff.is_constant_input:
        r_c = eff.r(None)
        qinv_c = _inv_spd(eff.q(None), "constant q")

        def total(flat):
            nodes = np.vstack([x, flat.reshape(K, m)])
            d = np.diff(nodes, axis=0) / dts[:, None] - r_c
            return 0.5 * float(np.sum(dts * np.einsum("ki,ij,kj->k", d, qinv_c, d))) + float(h(nodes[-1]))
    else:
        def total(flat):
            nodes = np.vstack([x, flat.reshape(K, m)])
            return action_r1(DiscretePath(times, nodes), eff) + float(h(nodes[-1]))

    best = None
    for s in range(n_starts):
        end = x + r0 * (T - t)
        if s:
            end = end + spread * (1.0 + s / 2) * rng.standard_normal(m)
        frac = (times[1:] - t) / (T - t)
        flat = (x[None, :] + frac[:, None] * (end - x)[None, :]).ravel()
        val = total(flat)
        for _ in range(sweeps):
            before = val
            for idx in range(flat.size):
                def line(v, idx=idx):
                    trial = flat.copy()
                    trial[idx] = v
                    return total(trial)

                res = optimize.minimize_scalar(line, bracket=(flat[idx] - 0.1, flat[idx] + 0.1),
                                               method="brent", options={"xtol": 1e-10})
                if res.fun < val:
                    flat[idx], val = res.x, float(res.fun)
            if before - val <= 1e-13 * (1.0 + abs(val)):
                break
        res = optimize.minimize(total, flat, method="Powell",
                                options={"xtol": 1e-10, "ftol": 1e-15, "maxiter": 200000})
        if res.fun < val:
            flat, val = np.asarray(res.x), float(res.fun)
        if best is None or val < best[0]:
            best = (val, s, flat.copy())
    val, _, flat = best
    return val, DiscretePath(times, np.vstack([x, flat.reshape(K, m)]))


def quasipotential_G(t, x, h: TerminalCost, eff: EffectiveDynamics, method: str = "hopf_lax", *,
                     T: float, box=None, probe=None, **kw) -> float:
    """Value ``G(t, x)`` of the terminal-cost variational problem.

    Parameters
    ----------
    method : {"hopf_lax", "path_opt"}
        ``hopf_lax`` needs constant ``r`` and ``q``; for a model-backed
        ``eff`` the constancy is checked at ``probe`` points (defaults to a
        few points around ``x``).
    """
    x = np.atleast_1d(np.asarray(x, float))
    if method == "hopf_lax":
        if probe is None and not eff.is_constant_input:
            probe = x[None, :] + np.linspace(-1.0, 1.0, 5)[:, None]
        r, q = _constant_rq(eff, probe)
        return hopf_lax_value(t, x, h, r, q, T, box=box)[0]
    if method == "path_opt":
        return path_opt_value(t, x, h, eff, T, **kw)[0]
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# subsolutions


@dataclass
class Subsolution:
    """Candidate subsolution with its derivatives and the terminal cost.

    All evaluators accept ``t`` (scalar or array) and ``x`` of shape ``(..., m)``.
    """

    u: Callable
    grad_x: Callable
    dt: Callable
    h: TerminalCost
    T: float
    name: str = "custom"
    m: int = 1


def zero_subsolution(h: TerminalCost, T: float, m: int = 1) -> Subsolution:
    """``U = 0`` (plain Monte Carlo)."""

    def zero(t, x):
        return np.zeros(np.shape(x)[:-1])

    return Subsolution(zero, lambda t, x: np.zeros(np.shape(x)), zero, h, T, "zero", m)


def affine_subsolution(a, b: float, h_bar_a: float, h: TerminalCost, T: float) -> Subsolution:
    """``U(t, x) = <a, x> + b + H(a) (T - t)`` for an x-independent ``H(a)``."""
    a = np.atleast_1d(np.asarray(a, float))

    def u(t, x):
        return np.asarray(x, float) @ a + b + h_bar_a * (T - np.asarray(t, float))

    def grad(t, x):
        return np.broadcast_to(a, np.shape(x)).copy()

    def dt(t, x):
        return np.full(np.broadcast_shapes(np.shape(t), np.shape(x)[:-1]), -h_bar_a)

    return Subsolution(u, grad, dt, h, T, "affine", a.size)


class HopfLaxSubsolution(Subsolution):
    """Hopf-Lax solution of ``U_t + <r, DU> - DU^T q DU / 2 = 0``, ``U(T) = h``.

    For costs with ``grad``/``hess`` the minimizer ``z*`` is found by a
    vectorized Newton iteration (exact in one step for quadratic costs);
    otherwise by derivative-free search point by point.  Gradient and time
    derivative follow from the envelope theorem:
    ``DU = -q^{-1} w / tau`` and ``U_t = w^T q^{-1} r / tau + w^T q^{-1} w / (2 tau^2)``
    with ``w = z* - x - r tau``.
    """

    def __init__(self, h: TerminalCost, r, q, T: float):
        self.r = np.atleast_1d(np.asarray(r, float))
        self.q = np.atleast_2d(np.asarray(q, float))
        self.qinv = _inv_spd(self.q, "constant q")
        m = self.r.size
        super().__init__(self._u, self._grad, self._dt, h, T, "hopf_lax", m)

    def minimizer(self, t, x):
        x = np.asarray(x, float)
        tau = np.asarray(self.T - np.asarray(t, float), float)
        lead = np.broadcast_shapes(tau.shape, x.shape[:-1])
        x = np.broadcast_to(x, lead + (self.r.size,))
        tau = np.broadcast_to(tau, lead)
        if np.any(tau < 0):
            raise ValueError("t must not exceed T")
        z = x.copy()
        live = tau > 0
        if not np.any(live):
            return z
        xl, tl = x[live], tau[live][:, None]
        center = xl + self.r * tl
        if self.h.smooth:
            zl = center.copy()
            for _ in range(60):
                F = (zl - center) @ self.qinv / tl + self.h.grad(zl)
                J = self.qinv[None] / tl[:, :, None] + self.h.hess(zl)
                step = np.linalg.solve(J, F[..., None])[..., 0]
                zl = zl - step
                if np.max(np.abs(step)) <= 1e-15 * (1.0 + np.max(np.abs(zl))):
                    break
        else:
            zl = np.array([hopf_lax_value(self.T - tt[0], xx, self.h, self.r, self.q, self.T)[1]
                           for xx, tt in zip(xl, tl)])
        z[live] = zl
        return z

    def _parts(self, t, x):
        z = self.minimizer(t, x)
        tau = np.broadcast_to(self.T - np.asarray(t, float), z.shape[:-1])
        x = np.broadcast_to(np.asarray(x, float), z.shape)
        w = z - x - self.r * tau[..., None]
        return z, w, tau

    def _u(self, t, x):
        z, w, tau = self._parts(t, x)
        safe = np.where(tau > 0, tau, 1.0)
        quad = np.einsum("...i,ij,...j->...", w, self.qinv, w) / (2 * safe)
        return np.where(tau > 0, quad, 0.0) + self.h(z)

    def _grad(self, t, x):
        z, w, tau = self._parts(t, x)
        safe = np.where(tau > 0, tau, 1.0)[..., None]
        g = -(w @ self.qinv) / safe
        if np.any(tau == 0):
            g = np.where((tau == 0)[..., None], self._terminal_grad(z), g)
        return g

    def _terminal_grad(self, z):
        if self.h.smooth:
            return self.h.grad(z)
        eps = 1e-6
        out = np.empty_like(z)
        for i in range(z.shape[-1]):
            e = np.zeros(z.shape[-1])
            e[i] = eps
            out[..., i] = (self.h(z + e) - self.h(z - e)) / (2 * eps)
        return out

    def _dt(self, t, x):
        z, w, tau = self._parts(t, x)
        safe = np.where(tau > 0, tau, 1.0)
        wq = w @ self.qinv
        val = wq @ self.r / safe + np.einsum("...i,...i->...", wq, w) / (2 * safe**2)
        if np.any(tau == 0):
            p = self._terminal_grad(z)
            ham = p @ self.r - 0.5 * np.einsum("...i,ij,...j->...", p, self.q, p)
            val = np.where(tau == 0, -ham, val)
        return val

    def hamiltonian(self) -> HamiltonianHandle:
        return HamiltonianHandle.from_effective(EffectiveDynamics.from_constant(self.r, self.q))


def table_subsolution(times, xs, values, h: TerminalCost, name: str = "table") -> Subsolution:
    """Subsolution from tabulated values ``values[i, j] = U(times[i], xs[j])`` (m = 1).

    A bicubic spline supplies ``U``, ``DU`` and ``U_t``; at least four
    points per axis are needed.  Queries outside the table extrapolate, so
    verify on the tabulated box only.
    """
    times = np.asarray(times, float)
    xs = np.asarray(xs, float)
    values = np.asarray(values, float)
    if values.shape != (times.size, xs.size):
        raise ValueError("values must have shape (len(times), len(xs))")
    if times.size < 4 or xs.size < 4:
        raise ValueError("a tabulated subsolution needs at least 4 times and 4 slow points")
    spline = interpolate.RectBivariateSpline(times, xs, values, kx=3, ky=3)

    def ev(t, x, dt=0, dx=0):
        x = np.asarray(x, float)
        tt = np.broadcast_to(np.asarray(t, float), x.shape[:-1])
        return spline.ev(tt, x[..., 0], dx=dt, dy=dx)

    return Subsolution(
        lambda t, x: ev(t, x),
        lambda t, x: ev(t, x, dx=1)[..., None],
        lambda t, x: ev(t, x, dt=1),
        h, float(times[-1]), name, 1,
    )


def hopf_lax_subsolution(h: TerminalCost, eff_or_rq, T: float, probe=None) -> HopfLaxSubsolution:
    """Build the Hopf-Lax subsolution from constant effective coefficients."""
    if isinstance(eff_or_rq, EffectiveDynamics):
        r, q = _constant_rq(eff_or_rq, probe)
    else:
        r, q = eff_or_rq
    return HopfLaxSubsolution(h, r, q, T)


# ---------------------------------------------------------------------------
# verification


@dataclass(frozen=True)
class VerifyGrid:
    """Space-time sampling for subsolution verification."""

    n_t: int = 11
    n_x: int = 21


@dataclass
class VerificationReport:
    """Result of :func:`verify_subsolution`.

    ``worst_hjb`` is the minimum of ``U_t + H(x, DU)`` over the grid and
    ``worst_terminal`` the minimum of ``h(x) - U(T, x)``; the check passes
    when both are ``>= -tol``.
    """

    passed: bool
    worst_hjb: float
    worst_hjb_at: tuple
    worst_terminal: float
    worst_terminal_at: np.ndarray
    max_abs_residual: float
    box: tuple
    tol: float
    rows: list = field(repr=False, default_factory=list)

    def header(self, m: int):
        return ["t"] + [f"x{i + 1}" for i in range(m)] + ["hjb_residual", "terminal_slack"]


def verify_subsolution(sub: Subsolution, ham: HamiltonianHandle, box, grid_spec: VerifyGrid = VerifyGrid(),
                       *, t0: float = 0.0, tol: float = 1e-8) -> VerificationReport:
    """Check ``U_t + H(x, DU) >= -tol`` on a space-time grid and
    ``U(T, x) <= h(x) + tol`` on the spatial grid.

    Times ``t0 + k (T - t0) / n_t`` for ``k < n_t`` are used; the terminal
    time enters only through the terminal inequality.  Failures are reported,
    never raised.  Passing certifies the inequalities on ``box`` only.
    """
    lo, hi = (np.atleast_1d(np.asarray(b, float)) for b in box)
    m = lo.size
    axes = [np.linspace(lo[i], hi[i], grid_spec.n_x) for i in range(m)]
    xs = np.array(list(itertools.product(*axes)))
    ts = t0 + (sub.T - t0) * np.arange(grid_spec.n_t) / grid_spec.n_t
    slack = np.asarray(sub.h(xs) - sub.u(sub.T, xs), float)
    rows = []
    worst = (np.inf, None)
    max_abs = 0.0
    for t in ts:
        res = np.asarray(sub.dt(t, xs) + ham(xs, sub.grad_x(t, xs)), float)
        j = int(np.argmin(res))
        if res[j] < worst[0]:
            worst = (float(res[j]), (float(t), xs[j].copy()))
        max_abs = max(max_abs, float(np.max(np.abs(res))))
        rows.extend([float(t), *xi, float(ri), float(si)] for xi, ri, si in zip(xs, res, slack))
    k = int(np.argmin(slack))
    passed = worst[0] >= -tol and slack[k] >= -tol
    return VerificationReport(passed=bool(passed), worst_hjb=worst[0], worst_hjb_at=worst[1],
                              worst_terminal=float(slack[k]), worst_terminal_at=xs[k],
                              max_abs_residual=max_abs, box=(lo, hi), tol=tol, rows=rows)


def gradient_fd_error(sub: Subsolution, t, points, step: float = 1e-5) -> float:
    """Max deviation between ``grad_x`` and central differences of ``u``."""
    points = np.atleast_2d(np.asarray(points, float))
    g = sub.grad_x(t, points)
    err = 0.0
    for i in range(points.shape[1]):
        e = np.zeros(points.shape[1])
        e[i] = step
        fd = (sub.u(t, points + e) - sub.u(t, points - e)) / (2 * step)
        err = max(err, float(np.max(np.abs(fd - g[:, i]))))
    return err


__all__: Sequence[str] = (
    "TerminalCost", "QuadraticCost", "LinearCost", "ZeroCost", "CallableCost",
    "HamiltonianHandle", "DiscretePath", "action_r1", "local_rate_r1",
    "local_rate_bruteforce_r1", "optimal_control_r1_ldp", "control_energy",
    "hopf_lax_value", "path_opt_value", "quasipotential_G", "Subsolution",
    "zero_subsolution", "affine_subsolution", "HopfLaxSubsolution",
    "hopf_lax_subsolution", "table_subsolution", "VerifyGrid", "VerificationReport",
    "verify_subsolution", "gradient_fd_error",
)
