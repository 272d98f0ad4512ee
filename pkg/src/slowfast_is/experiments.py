"""Built-in example models with closed-form reference quantities.

Two families are provided:

* the first-order Langevin equation in a rough potential ``V(x) + Q(x/delta)``
  with drift ``-V'`` and a periodic fast perturbation ``Q``;
* a fast mean-reverting stochastic volatility model, with either an
  Ornstein-Uhlenbeck fast factor or a periodic surrogate of it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .errors import SolverAccuracyError
from .model import CoefficientSet, ScaleRegime

ScalarFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class RoughLangevinSpec:
    """Rough-potential Langevin model in one slow dimension.

    Parameters
    ----------
    Q, dQ : callable
        Periodic fast potential and its derivative.
    V, dV : callable
        Slow potential and its derivative.
    D : float
        Diffusion constant.
    period : float
        Period of ``Q``.
    """

    Q: ScalarFn
    dQ: ScalarFn
    V: ScalarFn
    dV: ScalarFn
    D: float = 1.0
    period: float = 1.0

    def __post_init__(self):
        if not self.D > 0:
            raise ValueError("D must be positive")
        y = np.linspace(0.0, self.period, 33)
        if np.max(np.abs(self.Q(y + self.period) - self.Q(y))) > 1e-10 * (1 + np.max(np.abs(self.Q(y)))):
            raise ValueError("Q is not periodic with the given period")
        h = 1e-5
        fd = (self.Q(y + h) - self.Q(y - h)) / (2 * h)
        if np.max(np.abs(fd - self.dQ(y))) > 1e-6 * (1 + np.max(np.abs(self.dQ(y)))):
            raise ValueError("dQ is inconsistent with Q")

    @classmethod
    def cosine(cls, amplitude: float = 1.0, D: float = 1.0, period: float = 1.0,
               potential: str = "quadratic", stiffness: float = 1.0) -> "RoughLangevinSpec":
        """``Q = amplitude cos(2 pi y / period)`` with a quadratic or linear ``V``.

        ``potential="quadratic"`` gives ``V = stiffness x^2 / 2`` and
        ``potential="linear"`` gives ``V = stiffness x`` (constant force).
        """
        k = 2 * np.pi / period

        def Q(y):
            return amplitude * np.cos(k * np.asarray(y))

        def dQ(y):
            return -amplitude * k * np.sin(k * np.asarray(y))

        if potential == "quadratic":
            def V(x):
                return 0.5 * stiffness * np.asarray(x) ** 2

            def dV(x):
                return stiffness * np.asarray(x)
        elif potential == "linear":
            def V(x):
                return stiffness * np.asarray(x)

            def dV(x):
                return stiffness * np.ones_like(np.asarray(x, dtype=float))
        else:
            raise ValueError(f"unknown potential {potential!r}")
        return cls(Q=Q, dQ=dQ, V=V, dV=dV, D=D, period=period)


def build_rough_langevin(spec: RoughLangevinSpec) -> CoefficientSet:
    """b = f = -Q'(y), c = g = -V'(x), sigma = tau1 = sqrt(2D), tau2 = 0."""
    s = np.sqrt(2 * spec.D)

    def drift_fast(x, y):
        return -spec.dQ(y)

    def drift_slow(x, y):
        return -spec.dV(x[..., 0]) + 0.0 * y

    return CoefficientSet(
        m=1,
        kappa=1,
        period=spec.period,
        b=lambda x, y: drift_fast(x, y)[..., None],
        c=lambda x, y: drift_slow(x, y)[..., None],
        sigma=lambda x, y: s,
        f=drift_fast,
        g=drift_slow,
        tau1=lambda x, y: s,
        tau2=lambda x, y: 0.0,
        name="rough_langevin",
    )


def _romberg_period(fn: ScalarFn, period: float, rtol: float = 1e-13, kmax: int = 16) -> float:
    prev = None
    for k in range(4, kmax + 1):
        y = np.linspace(0.0, period, 2**k + 1)
        val = integrate.romb(fn(y), dx=period / 2**k)
        if prev is not None and abs(val - prev) <= rtol * abs(val):
            return float(val)
        prev = val
    raise SolverAccuracyError("Romberg quadrature did not converge")


@dataclass(frozen=True)
class LangevinClosedForms:
    L: float
    L_hat: float
    q: float
    r: Callable[[np.ndarray], np.ndarray]

    def dchi(self, Q: ScalarFn, D: float, period: float) -> ScalarFn:
        """Derivative of the corrector, ``(period / L_hat) exp(Q / D) - 1``."""
        return lambda y: period / self.L_hat * np.exp(Q(y) / D) - 1.0


def langevin_closed_forms(spec: RoughLangevinSpec) -> LangevinClosedForms:
    """Normalizing integrals and the explicit effective coefficients.

    ``L = int exp(-Q/D)``, ``L_hat = int exp(Q/D)``, ``q = 2 D lam^2 / (L L_hat)``
    and ``r(x) = -lam^2 V'(x) / (L L_hat)`` with ``lam`` the period.
    """
    lam, D = spec.period, spec.D
    L = _romberg_period(lambda y: np.exp(-spec.Q(y) / D), lam)
    L_hat = _romberg_period(lambda y: np.exp(spec.Q(y) / D), lam)
    factor = lam**2 / (L * L_hat)
    return LangevinClosedForms(
        L=L, L_hat=L_hat, q=2 * D * factor, r=lambda x: -factor * spec.dV(np.asarray(x, float))
    )


@dataclass(frozen=True)
class FastVolSpec:
    """Fast mean-reverting volatility model.

    Parameters
    ----------
    sigma : callable
        Volatility function of the fast factor, positive.
    h_drift : callable
        Slow drift ``h(y)``; enters the model as the eps-scaled drift ``eps h``.
    m : float
        Mean-reversion level.
    rho : float
        Correlation between the slow and fast noises.
    periodic_surrogate : bool
        Replace the linear pull ``m - y`` by ``(lam / 2 pi) sin(2 pi (m - y) / lam)``
        so that the fast variable lives on a torus of period ``lam``.
    period : float
        Surrogate period ``lam``.
    """

    sigma: ScalarFn
    h_drift: ScalarFn = field(default=lambda y: 0.0 * np.asarray(y))
    m: float = 0.0
    rho: float = 1.0
    periodic_surrogate: bool = False
    period: float = 1.0

    def __post_init__(self):
        if abs(self.rho) > 1:
            raise ValueError("rho must lie in [-1, 1]")
        y = np.linspace(self.m - 4, self.m + 4, 257)
        if np.min(self.sigma(y)) <= 0:
            raise ValueError("sigma must be positive")

    @classmethod
    def sine(cls, amplitude: float = 0.5, **kw) -> "FastVolSpec":
        """``sigma(y) = 1 + amplitude sin(2 pi y)``."""
        return cls(sigma=lambda y: 1.0 + amplitude * np.sin(2 * np.pi * np.asarray(y)), **kw)


def build_fast_vol(spec: FastVolSpec, regime: Optional[ScaleRegime] = None) -> CoefficientSet:
    """b = 0, c = 0 plus the modifier eps h(y), sigma(y), f = m - y, g = 0,
    tau1 = rho, tau2 = sqrt(1 - rho^2).

    Raises
    ------
    ValueError
        For R2 or R3 without the periodic surrogate.
    """
    if regime is not None and regime.tag in ("R2", "R3") and not spec.periodic_surrogate:
        raise ValueError("regimes R2 and R3 need the periodic surrogate of the fast factor")
    t1, t2 = spec.rho, np.sqrt(max(0.0, 1.0 - spec.rho**2))
    if spec.periodic_surrogate:
        lam = spec.period
        k = 2 * np.pi / lam

        def f(x, y):
            return np.sin(k * (spec.m - y)) / k
    else:
        lam = np.inf

        def f(x, y):
            return spec.m - y

    def zero_m(x, y):
        return np.zeros(np.shape(y) + (1,))

    return CoefficientSet(
        m=1,
        kappa=1,
        period=lam,
        b=zero_m,
        c=zero_m,
        sigma=lambda x, y: np.asarray(spec.sigma(y))[..., None, None],
        f=f,
        g=lambda x, y: 0.0 * y,
        tau1=lambda x, y: t1,
        tau2=lambda x, y: t2,
        drift_modifier=lambda eps, x, y: eps * np.asarray(spec.h_drift(y))[..., None],
        name="fast_vol",
    )


def fast_vol_q_gauss_hermite(spec: FastVolSpec, nodes: int = 80) -> float:
    """``int sigma^2 dmu`` for the Gaussian invariant law ``N(m, 1/2)``."""
    z, w = np.polynomial.hermite.hermgauss(nodes)
    return float(np.sum(w * spec.sigma(spec.m + z) ** 2) / np.sqrt(np.pi))


def fast_vol_r3_closed_form(spec: FastVolSpec, p: float, y: np.ndarray):
    """First-order cell solution for unit correlation and a periodic sigma.

    Returns ``(xi0, dxi0, h_bar0)`` with ``xi0 = p (y S - int_0^y sigma)``,
    ``S = int_0^1 sigma`` and ``h_bar0 = -p^2 S^2 / 2``.
    """
    S = integrate.quad(spec.sigma, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
    y = np.asarray(y, dtype=float)
    partial = np.array([integrate.quad(spec.sigma, 0.0, t, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
                        for t in y])
    return p * (y * S - partial), p * (S - spec.sigma(y)), -0.5 * p**2 * S**2


PRESETS = ("rough_langevin", "fast_vol")


def build_preset(name: str, params: dict, regime: Optional[ScaleRegime] = None) -> CoefficientSet:
    """Construct a registered model from flat parameters.

    rough_langevin: ``D``, ``amplitude``, ``period``, ``potential``
    (quadratic | linear), ``stiffness``.
    fast_vol: ``amplitude`` (sigma = 1 + amplitude sin 2 pi y), ``m``, ``rho``,
    ``periodic`` (bool), ``period``, ``h_const`` (constant slow drift h).
    Either family accepts ``sigma_scale`` to multiply every slow and fast noise
    coefficient of the slow equation; zero produces a degenerate model.
    """
    params = dict(params)
    scale = float(params.pop("sigma_scale", 1.0))
    if name == "rough_langevin":
        spec = RoughLangevinSpec.cosine(
            amplitude=float(params.pop("amplitude", 1.0)),
            D=float(params.pop("D", 1.0)),
            period=float(params.pop("period", 1.0)),
            potential=str(params.pop("potential", "quadratic")),
            stiffness=float(params.pop("stiffness", 1.0)),
        )
        model = build_rough_langevin(spec)
    elif name == "fast_vol":
        h_const = float(params.pop("h_const", 0.0))
        spec = FastVolSpec.sine(
            amplitude=float(params.pop("amplitude", 0.5)),
            m=float(params.pop("m", 0.0)),
            rho=float(params.pop("rho", 1.0)),
            periodic_surrogate=_as_bool(params.pop("periodic", True)),
            period=float(params.pop("period", 1.0)),
            h_drift=lambda y: h_const + 0.0 * np.asarray(y),
        )
        model = build_fast_vol(spec, regime)
    else:
        raise ValueError(f"unknown model {name!r}; known: {', '.join(PRESETS)}")
    if params:
        raise ValueError(f"unknown parameters for {name}: {', '.join(sorted(params))}")
    if scale != 1.0:
        sig = model.sigma
        model = _replace(model, sigma=lambda x, y: scale * np.asarray(sig(x, y)))
    return model


def _as_bool(value) -> bool:
    if isinstance(value, str):
        low = value.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    return bool(value)


def _replace(model: CoefficientSet, **kw) -> CoefficientSet:
    from dataclasses import replace

    return replace(model, **kw)
