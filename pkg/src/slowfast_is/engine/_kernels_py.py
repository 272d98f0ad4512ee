"""Pure numpy implementations of the sampler kernels.

The compiled module ``_kernels`` exposes the same two functions.  Both
versions perform the floating-point operations in the same order, so they
agree to the last bit on platforms without fused multiply-add contraction.
"""

from __future__ import annotations

import numpy as np


def em_step(x, y, drift_x, sig, drift_y, tau1, tau2, u1, u2, dW, dB, loglr,
            dt, sqrt_eps, inv_delta, inv_eps):
    """One controlled Euler-Maruyama step for a batch of paths, in place.

    Parameters
    ----------
    x : (P, m) array, updated
    y : (P,) array, updated
    drift_x : (P, m) array
        Uncontrolled slow drift ``(eps/delta) b + c``.
    sig : (P, m, k) array
    drift_y : (P,) array
        Uncontrolled fast drift ``(eps/delta) f + g`` (before the 1/delta factor).
    tau1, tau2, u1, u2, dW, dB : (P, k) arrays
    loglr : (P,) array, updated with the log likelihood ratio increment.
    """
    P, m, k = sig.shape
    sq = 1.0 / sqrt_eps
    ctrl_x = np.zeros((P, m))
    noise_x = np.zeros((P, m))
    for j in range(k):
        ctrl_x += sig[:, :, j] * u1[:, j, None]
        noise_x += sig[:, :, j] * dW[:, j, None]
    fast_ctrl = np.zeros(P)
    fast_noise = np.zeros(P)
    energy = np.zeros(P)
    cross = np.zeros(P)
    for j in range(k):
        fast_ctrl += tau1[:, j] * u1[:, j]
        fast_ctrl += tau2[:, j] * u2[:, j]
        fast_noise += tau1[:, j] * dW[:, j]
        fast_noise += tau2[:, j] * dB[:, j]
        energy += u1[:, j] * u1[:, j]
        energy += u2[:, j] * u2[:, j]
        cross += u1[:, j] * dW[:, j]
        cross += u2[:, j] * dB[:, j]
    x += (drift_x + ctrl_x) * dt + sqrt_eps * noise_x
    y += inv_delta * ((drift_y + fast_ctrl) * dt + sqrt_eps * fast_noise)
    loglr += -0.5 * inv_eps * energy * dt - sq * cross


def periodic_cubic(coef, idx, y, period, out):
    """Evaluate piecewise cubics on a periodic grid.

    Parameters
    ----------
    coef : (K, 4, n) array
        Polynomial coefficients per table and interval, highest power first,
        local variable measured from the left node.
    idx : (P,) int64 array
        Table index per query.
    y : (P,) array
        Query points (any real; reduced modulo ``period``).
    out : (P,) array, overwritten
    """
    n = coef.shape[2]
    h = period / n
    s = np.mod(y, period)
    j = np.floor(s / h).astype(np.int64)
    j = np.minimum(np.maximum(j, 0), n - 1)
    t = s - j * h
    c = coef[idx, :, j]
    out[:] = ((c[:, 0] * t + c[:, 1]) * t + c[:, 2]) * t + c[:, 3]
    return out
