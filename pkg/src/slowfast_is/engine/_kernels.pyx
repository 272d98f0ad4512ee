# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sampler kernels (same contracts as ``_kernels_py``)."""

from libc.math cimport floor, fmod


def em_step(double[:, ::1] x, double[::1] y, const double[:, ::1] drift_x,
            const double[:, :, ::1] sig, const double[::1] drift_y,
            const double[:, ::1] tau1, const double[:, ::1] tau2,
            const double[:, ::1] u1, const double[:, ::1] u2,
            const double[:, ::1] dW, const double[:, ::1] dB, double[::1] loglr,
            double dt, double sqrt_eps, double inv_delta, double inv_eps):
    cdef Py_ssize_t P = sig.shape[0], m = sig.shape[1], k = sig.shape[2]
    cdef Py_ssize_t p, i, j
    cdef double sq = 1.0 / sqrt_eps
    cdef double cx, nx, fc, fn, en, cr
    with nogil:
        for p in range(P):
            for i in range(m):
                cx = 0.0
                nx = 0.0
                for j in range(k):
                    cx = cx + sig[p, i, j] * u1[p, j]
                    nx = nx + sig[p, i, j] * dW[p, j]
                x[p, i] = x[p, i] + ((drift_x[p, i] + cx) * dt + sqrt_eps * nx)
            fc = 0.0
            fn = 0.0
            en = 0.0
            cr = 0.0
            for j in range(k):
                fc = fc + tau1[p, j] * u1[p, j]
                fc = fc + tau2[p, j] * u2[p, j]
                fn = fn + tau1[p, j] * dW[p, j]
                fn = fn + tau2[p, j] * dB[p, j]
                en = en + u1[p, j] * u1[p, j]
                en = en + u2[p, j] * u2[p, j]
                cr = cr + u1[p, j] * dW[p, j]
                cr = cr + u2[p, j] * dB[p, j]
            y[p] = y[p] + inv_delta * ((drift_y[p] + fc) * dt + sqrt_eps * fn)
            loglr[p] = loglr[p] + (-0.5 * inv_eps * en * dt - sq * cr)


def periodic_cubic(const double[:, :, ::1] coef, const long long[::1] idx, const double[::1] y,
                   double period, double[::1] out):
    cdef Py_ssize_t n = coef.shape[2], P = y.shape[0], p, j, t_i
    cdef double h = period / n
    cdef double s, t
    with nogil:
        for p in range(P):
            s = fmod(y[p], period)
            if s != 0.0 and s < 0.0:
                s = s + period
            j = <Py_ssize_t> floor(s / h)
            if j < 0:
                j = 0
            elif j > n - 1:
                j = n - 1
            t = s - j * h
            t_i = idx[p]
            out[p] = ((coef[t_i, 0, j] * t + coef[t_i, 1, j]) * t + coef[t_i, 2, j]) * t + coef[t_i, 3, j]
    return out
