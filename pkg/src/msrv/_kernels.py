"""Compiled inner loops. All sums use Neumaier compensation."""

import numba
import numpy as np


@numba.njit(cache=True)
def compensated_sum(values):
    s = 0.0
    c = 0.0
    for v in values:
        t = s + v
        if abs(s) >= abs(v):
            c += (s - t) + v
        else:
            c += (v - t) + s
        s = t
    return s + c


@numba.njit(cache=True)
def lag_cross_sums(x, z, scales):
    """sum_{i>=K} (x_i - x_{i-K}) (z_i - z_{i-K}) for each K in ``scales``."""
    out = np.empty(scales.shape[0])
    n1 = x.shape[0]
    for j in range(scales.shape[0]):
        k = scales[j]
        s = 0.0
        c = 0.0
        for i in range(k, n1):
            v = (x[i] - x[i - k]) * (z[i] - z[i - k])
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        out[j] = s + c
    return out


@numba.njit(cache=True)
def lag_sq_sums(y, scales):
    out = np.empty(scales.shape[0])
    n1 = y.shape[0]
    for j in range(scales.shape[0]):
        k = scales[j]
        s = 0.0
        c = 0.0
        for i in range(k, n1):
            d = y[i] - y[i - k]
            v = d * d
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        out[j] = s + c
    return out


@numba.njit(cache=True)
def lag_products(e, scales):
    """sum_{i>=K} e_i e_{i-K} for each K in ``scales``."""
    out = np.empty(scales.shape[0])
    n1 = e.shape[0]
    for j in range(scales.shape[0]):
        k = scales[j]
        s = 0.0
        c = 0.0
        for i in range(k, n1):
            v = e[i] * e[i - k]
            t = s + v
            if abs(s) >= abs(v):
                c += (s - t) + v
            else:
                c += (v - t) + s
            s = t
        out[j] = s + c
    return out


@numba.njit(cache=True)
def euler_full_truncation(v0, kappa, theta, xi, dts, z):
    """Variance path of dv = kappa (theta - v) dt + xi sqrt(v) dW, full truncation.

    Returns the left-point values ``v_j`` for each step; negative excursions are
    kept in the state but every drift/diffusion evaluation uses ``max(v, 0)``.
    """
    m = dts.shape[0]
    out = np.empty(m)
    v = v0
    for j in range(m):
        out[j] = v
        vp = v if v > 0.0 else 0.0
        v = v + kappa * (theta - vp) * dts[j] + xi * np.sqrt(vp * dts[j]) * z[j]
    return out
