"""Controlled Euler-Maruyama sampler, likelihood ratios and estimators.

Paths are simulated in fixed-size chunks.  Every path draws its Gaussian
increments from its own counter-based stream, and chunks are reassembled in
path order, so estimates are bit-identical for any number of worker threads.
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..errors import DivergedTrajectoryError, EstimationError
from ..model import CoefficientSet, ScaleRegime
from . import kernels
from .controls import ControlPolicy
from .rng import ChunkStreams, path_generator

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("epsilon", "delta", "n", "theta_hat", "std_err", "rel_err", "q_hat",
                 "decay_mean", "decay_2nd", "bound", "runtime_ms")

_DRAW_BLOCK = 256


# ---------------------------------------------------------------------------
# configuration


def fast_scale(epsilon: float, delta: float) -> float:
    """Time scale of the fast block: ``min(delta^2/eps, delta)``."""
    return min(delta * delta / epsilon, delta)


def fast_stiffness(model: CoefficientSet, x, n: int = 256) -> float:
    """Stiffness multiplier of the fast block at slow state ``x``.

    ``max(1, |d_y f|, |d_y g|, a / period^2)`` over a grid of the cell, with
    ``a = |tau1|^2 + |tau2|^2``.  Coefficients of size one give 1; a fast
    drift like ``2 pi sin(2 pi y)`` gives about ``4 pi^2``.
    """
    x = np.atleast_1d(np.asarray(x, float))
    if np.isfinite(model.period):
        ys = np.arange(n) * (model.period / n)
        span = model.period
    else:
        ys = np.linspace(-4.0, 4.0, n)
        span = np.inf
    v = model.evaluate(x, ys)
    h = ys[1] - ys[0]

    def slope(u):
        u = np.broadcast_to(u, ys.shape)
        if np.isfinite(span):
            return np.abs(np.roll(u, -1) - np.roll(u, 1)) / (2 * h)
        return np.abs(np.gradient(u, h))

    a = np.sum(v.tau1**2, axis=-1) + np.sum(v.tau2**2, axis=-1)
    return float(max(1.0, np.max(slope(v.f)), np.max(slope(v.g)), np.max(a) / span**2))


def auto_dt(epsilon: float, delta: float, t0: float, T: float, c_fast: float = 0.1,
            stiffness: float = 1.0) -> float:
    """Largest ``dt = (T - t0)/N`` with ``dt <= c_fast * fast_scale / stiffness``."""
    span = T - t0
    n = max(1, math.ceil(span * stiffness / (c_fast * fast_scale(epsilon, delta)) - 1e-9))
    return span / n


@dataclass(frozen=True)
class SimConfig:
    """Simulation parameters.

    Parameters
    ----------
    epsilon, delta : float
        Noise intensity and fast time scale (``delta`` from the regime).
    t0, T : float
    dt : float
        Must divide ``T - t0`` and satisfy ``dt <= c_fast * min(delta^2/eps, delta)``.
    n_paths : int
    seed : int
        64-bit run seed.
    x0 : array_like, shape (m,)
    y0 : float
    c_fast : float
        Fast-scale resolution constant, at most 0.2.
    chunk_size : int
        Paths per work unit.  Fixed, so results do not depend on threads.

    Notes
    -----
    The bound on ``dt`` is necessary, not sufficient: with stiff fast
    coefficients use :meth:`for_regime` with a model, which also divides by
    :func:`fast_stiffness`.
    """

    epsilon: float
    delta: float
    t0: float
    T: float
    dt: float
    n_paths: int
    seed: int
    x0: tuple
    y0: float = 0.0
    c_fast: float = 0.1
    chunk_size: int = 2048

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))
        if not (self.epsilon > 0 and self.delta > 0):
            raise ValueError("epsilon and delta must be positive")
        if not self.T > self.t0:
            raise ValueError("T must exceed t0")
        if not 0 < self.c_fast <= 0.2:
            raise ValueError("c_fast must lie in (0, 0.2]")
        if self.n_paths < 1 or self.chunk_size < 1:
            raise ValueError("n_paths and chunk_size must be positive")
        limit = self.c_fast * fast_scale(self.epsilon, self.delta)
        if not 0 < self.dt <= limit * (1 + 1e-12):
            raise ValueError(
                f"dt = {self.dt:.4g} does not resolve the fast scale (limit {limit:.4g} "
                f"for c_fast = {self.c_fast})"
            )
        n = round((self.T - self.t0) / self.dt)
        if abs(n * self.dt - (self.T - self.t0)) > 1e-9 * (self.T - self.t0):
            raise ValueError("dt must divide T - t0")

    @classmethod
    def for_regime(cls, regime: ScaleRegime, epsilon: float, *, t0: float = 0.0, T: float = 1.0,
                   n_paths: int = 1000, seed: int = 0, x0=(0.0,), y0: float = 0.0,
                   c_fast: float = 0.1, chunk_size: int = 2048, dt: Optional[float] = None,
                   model: Optional[CoefficientSet] = None) -> "SimConfig":
        """Config with ``delta`` from the regime and ``dt`` from :func:`auto_dt` unless given.

        When ``model`` is passed the step also accounts for the stiffness of
        its fast coefficients at ``x0``.
        """
        delta = regime.delta(epsilon)
        if dt is None:
            stiff = fast_stiffness(model, x0) if model is not None else 1.0
            dt = auto_dt(epsilon, delta, t0, T, c_fast, stiff)
        return cls(epsilon, delta, t0, T, dt, n_paths, seed, x0, y0, c_fast, chunk_size)

    @property
    def n_steps(self) -> int:
        return int(round((self.T - self.t0) / self.dt))

    @property
    def m(self) -> int:
        return len(self.x0)


# ---------------------------------------------------------------------------
# integration


@dataclass
class TrajectoryOutcome:
    """Terminal state and log likelihood ratio ``log dP/dPbar`` of one path."""

    x_T: np.ndarray
    log_lr: float
    path_stats: Optional[dict] = None


@dataclass
class BatchOutcome:
    """Terminal states of a batch; ``diverged[i]`` is the failing step or -1."""

    x_T: np.ndarray
    log_lr: np.ndarray
    diverged: np.ndarray

    @property
    def ok(self) -> np.ndarray:
        return self.diverged < 0


class _Increments:
    """Scaled increments for one chunk, drawn in blocks of steps."""

    def __init__(self, streams, width: int, sqrt_dt: float):
        self._streams = streams
        self._block = None
        self._pos = 0
        self._sqrt_dt = sqrt_dt
        self._width = width

    def next(self, remaining: int):
        if self._block is None or self._pos == self._block.shape[0]:
            self._block = self._streams.draw(min(_DRAW_BLOCK, remaining)) * self._sqrt_dt
            self._pos = 0
        z = self._block[self._pos]
        self._pos += 1
        k = self._width // 2
        return np.ascontiguousarray(z[:, :k]), np.ascontiguousarray(z[:, k:])


def _run(model: CoefficientSet, cfg: SimConfig, policy: ControlPolicy, streams, n_paths: int,
         record_every: int = 0):
    m, k = model.m, model.kappa
    if cfg.m != m:
        raise ValueError(f"x0 has dimension {cfg.m}, model has m = {m}")
    if policy.kappa != k:
        raise ValueError(f"policy has kappa = {policy.kappa}, model has {k}")
    eps, delta, dt = cfg.epsilon, cfg.delta, cfg.dt
    ratio = eps / delta
    periodic = bool(np.isfinite(model.period))
    x = np.tile(np.asarray(cfg.x0, float), (n_paths, 1))
    y = np.full(n_paths, float(cfg.y0))
    loglr = np.zeros(n_paths)
    diverged = np.full(n_paths, -1, np.int64)
    inc = _Increments(streams, 2 * k, math.sqrt(dt))
    zero = np.zeros((n_paths, k))
    trace = [] if record_every else None
    n_steps = cfg.n_steps
    args = (dt, math.sqrt(eps), 1.0 / delta, 1.0 / eps)
    for step in range(n_steps):
        s = cfg.t0 + step * dt
        if trace is not None and step % record_every == 0:
            trace.append((s, x.copy(), y.copy()))
        ym = np.mod(y, model.period) if periodic else y
        cv = model.evaluate(x, ym)
        drift_x = ratio * cv.b + cv.c
        if model.drift_modifier is not None:
            drift_x = drift_x + np.asarray(model.drift_modifier(eps, x, ym), float)
        drift_y = ratio * cv.f + cv.g
        if policy.is_zero:
            u1 = u2 = zero
        else:
            u1, u2 = policy.evaluator(s, x, ym, cv)
        dW, dB = inc.next(n_steps - step)
        kernels.em_step(
            x, y, np.ascontiguousarray(drift_x, dtype=float),
            np.ascontiguousarray(cv.sigma, dtype=float), np.ascontiguousarray(drift_y, dtype=float),
            np.ascontiguousarray(cv.tau1, dtype=float), np.ascontiguousarray(cv.tau2, dtype=float),
            np.ascontiguousarray(u1, dtype=float), np.ascontiguousarray(u2, dtype=float),
            dW, dB, loglr, *args,
        )
        bad = ~(np.isfinite(y) & np.isfinite(loglr) & np.all(np.isfinite(x), axis=1))
        if bad.any():
            fresh = bad & (diverged < 0)
            diverged[fresh] = step
            # park diverged paths at a harmless state; they are masked later
            x[bad] = 0.0
            y[bad] = 0.0
            loglr[bad] = 0.0
    if trace is not None:
        trace.append((cfg.T, x.copy(), y.copy()))
    return BatchOutcome(x, loglr, diverged), trace


def simulate_batch(model: CoefficientSet, cfg: SimConfig, policy: ControlPolicy, *,
                   threads: int = 1) -> BatchOutcome:
    """Simulate ``cfg.n_paths`` controlled paths.

    Paths ``[i*chunk, (i+1)*chunk)`` form work unit ``i``; units may run on
    ``threads`` workers, and their outputs are concatenated in unit order.
    """
    n, size = cfg.n_paths, cfg.chunk_size
    starts = list(range(0, n, size))

    def unit(start):
        paths = range(start, min(start + size, n))
        streams = ChunkStreams(cfg.seed, paths, 2 * model.kappa)
        with np.errstate(over="ignore", invalid="ignore"):
            return _run(model, cfg, policy, streams, len(paths))[0]

    if threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(unit, starts))
    else:
        parts = [unit(s) for s in starts]
    return BatchOutcome(
        np.concatenate([p.x_T for p in parts]),
        np.concatenate([p.log_lr for p in parts]),
        np.concatenate([p.diverged for p in parts]),
    )


class _SingleStream:
    def __init__(self, gen: np.random.Generator, width: int):
        self._gen, self.width = gen, width

    def draw(self, n_steps: int) -> np.ndarray:
        return self._gen.standard_normal((n_steps, self.width))[:, None, :]


def integrate_controlled(model: CoefficientSet, regime: ScaleRegime, config: SimConfig,
                         policy: ControlPolicy, rng_stream=0, *, record_every: int = 0) -> TrajectoryOutcome:
    """Simulate one path under the sampling measure.

    Parameters
    ----------
    rng_stream : int or numpy.random.Generator
        Path index (the stream of that path in a batch run with
        ``config.seed``) or an explicit generator.
    record_every : int
        Record ``(s, x, y)`` every this many steps in ``path_stats``.

    Raises
    ------
    DivergedTrajectoryError
        If the state or the likelihood ratio becomes non-finite.
    """
    if abs(regime.delta(config.epsilon) - config.delta) > 1e-12 * config.delta:
        raise ValueError("config.delta does not match the regime")
    gen = path_generator(config.seed, rng_stream) if isinstance(rng_stream, (int, np.integer)) else rng_stream
    with np.errstate(over="ignore", invalid="ignore"):
        out, trace = _run(model, config, policy, _SingleStream(gen, 2 * model.kappa), 1, record_every)
    if out.diverged[0] >= 0:
        raise DivergedTrajectoryError(int(out.diverged[0]), int(rng_stream) if isinstance(rng_stream, (int, np.integer)) else -1)
    stats = None
    if trace is not None:
        stats = {
            "s": np.array([t[0] for t in trace]),
            "x": np.array([t[1][0] for t in trace]),
            "y": np.array([t[2][0] for t in trace]),
        }
    return TrajectoryOutcome(out.x_T[0].copy(), float(out.log_lr[0]), stats)


# ---------------------------------------------------------------------------
# functionals


class ExpCost:
    """``exp(-h(x_T)/eps)``."""

    kind = "exp_cost"

    def __init__(self, h: Callable):
        self.h = h

    def log_weight(self, x: np.ndarray, eps: float) -> np.ndarray:
        return -np.asarray(self.h(x), float) / eps


class Indicator:
    """``1_A(x_T)`` for a set with a ``contains`` method."""

    kind = "indicator"

    def __init__(self, region):
        self.region = region

    def log_weight(self, x: np.ndarray, eps: float) -> np.ndarray:
        return np.where(self.region.contains(x), 0.0, -np.inf)


@dataclass(frozen=True)
class Box:
    lo: tuple
    hi: tuple

    def contains(self, x):
        return np.all((x >= np.asarray(self.lo)) & (x <= np.asarray(self.hi)), axis=-1)


@dataclass(frozen=True)
class HalfSpace:
    """``{x : <normal, x> >= offset}``."""

    normal: tuple
    offset: float

    def contains(self, x):
        return np.asarray(x) @ np.asarray(self.normal, float) >= self.offset


# ---------------------------------------------------------------------------
# estimation


@dataclass
class EstimatorReport:
    """Monte Carlo summary of ``Gamma = F(x_T) * exp(log_lr)``.

    ``log_theta`` and ``log_q`` hold the logarithms of ``theta_hat`` and
    ``q_hat``; the decay rates are computed from them, so they stay finite
    when the estimates underflow.
    """

    epsilon: float
    delta: float
    n: int
    theta_hat: float
    std_err: float
    rel_err: float
    q_hat: float
    decay_mean: float
    decay_2nd: float
    log_theta: float
    log_q: float
    bound: float = float("nan")
    runtime_ms: float = 0.0
    n_diverged: int = 0
    lr_mean: float = float("nan")
    lr_std_err: float = float("nan")
    error: str = ""

    def row(self, timing: bool = True) -> dict:
        out = {c: getattr(self, c) for c in SWEEP_COLUMNS}
        if not timing:
            out["runtime_ms"] = 0
        return out


def summarize(log_gamma: np.ndarray, epsilon: float) -> dict:
    """Statistics of ``Gamma = exp(log_gamma)`` computed in the log domain."""
    n = log_gamma.size
    finite = np.isfinite(log_gamma)
    if not finite.any():
        return dict(n=n, theta_hat=0.0, std_err=0.0, rel_err=float("inf"), q_hat=0.0,
                    decay_mean=float("inf"), decay_2nd=float("inf"),
                    log_theta=float("-inf"), log_q=float("-inf"))
    M = float(np.max(log_gamma[finite]))
    w = np.exp(log_gamma - M)
    mean_w = float(np.mean(w))
    var_b = float(np.mean((w - mean_w) ** 2))
    m2_w = mean_w * mean_w + var_b  # >= mean_w**2 in floating point
    sd_w = math.sqrt(var_b * n / (n - 1)) if n > 1 else 0.0
    log_theta = M + math.log(mean_w)
    log_q = 2 * M + math.log(m2_w)
    return dict(
        n=n,
        theta_hat=math.exp(log_theta),
        std_err=math.exp(M) * sd_w / math.sqrt(n),
        rel_err=sd_w / (math.sqrt(n) * mean_w),
        q_hat=math.exp(log_q),
        decay_mean=-epsilon * log_theta,
        decay_2nd=-epsilon * log_q,
        log_theta=log_theta,
        log_q=log_q,
    )


def estimate(model: CoefficientSet, regime: ScaleRegime, config: SimConfig, policy: ControlPolicy,
             functional, *, threads: int = 1, bound: float = float("nan")) -> EstimatorReport:
    """Importance-sampling estimate of ``E[F(X(T))]``.

    Raises
    ------
    EstimationError
        If ``n_paths < 100`` or every path diverged.
    """
    if config.n_paths < 100:
        raise EstimationError("n_paths must be at least 100")
    if abs(regime.delta(config.epsilon) - config.delta) > 1e-12 * config.delta:
        raise ValueError("config.delta does not match the regime")
    start = time.perf_counter()
    batch = simulate_batch(model, config, policy, threads=threads)
    ok = batch.ok
    n_div = int(np.count_nonzero(~ok))
    if n_div == config.n_paths:
        raise EstimationError("all paths diverged")
    if n_div:
        log.warning("%d of %d paths diverged and were dropped", n_div, config.n_paths)
    lr = batch.log_lr[ok]
    log_gamma = functional.log_weight(batch.x_T[ok], config.epsilon) + lr
    stats = summarize(log_gamma, config.epsilon)
    lr_w = np.exp(lr)
    elapsed = (time.perf_counter() - start) * 1e3
    return EstimatorReport(
        epsilon=config.epsilon, delta=config.delta, bound=float(bound), runtime_ms=elapsed,
        n_diverged=n_div, lr_mean=float(np.mean(lr_w)),
        lr_std_err=float(np.std(lr_w, ddof=1) / math.sqrt(lr_w.size)), **stats,
    )


def sweep_epsilon(model: CoefficientSet, regime: ScaleRegime, policy_factory: Callable,
                  eps_list: Sequence[float], config_template: dict, functional, *,
                  bound: float = float("nan"), threads: int = 1) -> list:
    """Run :func:`estimate` over a decreasing list of epsilons.

    ``config_template`` holds :meth:`SimConfig.for_regime` keywords; delta
    and dt are recomputed per epsilon.  ``policy_factory(eps)`` returns the
    policy to use.  A failure at one epsilon yields a row of NaNs with the
    message in ``error`` and the sweep continues.
    """
    eps = [float(e) for e in eps_list]
    if not eps or any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("eps_list must be non-empty and strictly decreasing")
    template = dict(config_template)
    template.setdefault("model", model)
    rows = []
    for e in eps:
        try:
            cfg = SimConfig.for_regime(regime, e, **template)
            rep = estimate(model, regime, cfg, policy_factory(e), functional, threads=threads, bound=bound)
        except Exception as exc:  # recorded per row
            log.error("sweep failed at eps=%g: %s", e, exc)
            nan = float("nan")
            rep = EstimatorReport(e, regime.delta(e), 0, nan, nan, nan, nan, nan, nan, nan, nan,
                                  bound=float(bound), error=f"{type(exc).__name__}: {exc}")
        rows.append(rep)
    return rows


def decay_bound(sub, t0: float, x0, G: float) -> float:
    """``G(t0, x0) + U(t0, x0)``, the second-moment decay bound."""
    return float(G + np.asarray(sub.u(t0, np.atleast_1d(np.asarray(x0, float))[None]))[0])
