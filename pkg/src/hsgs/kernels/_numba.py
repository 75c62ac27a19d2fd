"""numba-jitted twins of the kernels in ``_numpy.py``."""

import numpy as np
from numba import njit

_kw = {"cache": True, "fastmath": False}


@njit(**_kw)
def _ipow(x, n):
    """x**n by repeated squaring (n >= 1)."""
    r = 1.0
    b = x
    while n > 0:
        if n & 1:
            r *= b
        b *= b
        n >>= 1
    return r


@njit(**_kw)
def horizontal_lq_profile(field, wxy, q):
    # row-major layout: keep j in the inner loop for contiguous access;
    # integer exponents (the common case, q = 132 included) go through
    # repeated squaring instead of a libm pow per element
    nxy, nz = field.shape
    peak = np.zeros(nz)
    for i in range(nxy):
        for j in range(nz):
            a = abs(field[i, j])
            if a > peak[j]:
                peak[j] = a
    iq = int(q)
    integer_q = float(iq) == q
    s = np.zeros(nz)
    for i in range(nxy):
        w = wxy[i]
        for j in range(nz):
            if peak[j] > 0.0:
                r = abs(field[i, j]) / peak[j]
                s[j] += w * (_ipow(r, iq) if integer_q else r**q)
    out = np.zeros(nz)
    for j in range(nz):
        if peak[j] > 0.0:
            out[j] = peak[j] * s[j] ** (1.0 / q)
    return out


@njit(**_kw)
def horizontal_linf_profile(field):
    nxy, nz = field.shape
    out = np.zeros(nz)
    for j in range(nz):
        p = 0.0
        for i in range(nxy):
            a = abs(field[i, j])
            if a > p:
                p = a
        out[j] = p
    return out


@njit(**_kw)
def cumtrapz_z(field, wz_dz):
    nxy, nz = field.shape
    out = np.zeros_like(field)
    for i in range(nxy):
        acc = 0.0
        for j in range(1, nz):
            acc += 0.5 * wz_dz[j - 1] * (field[i, j - 1] + field[i, j])
            out[i, j] = acc
    return out


@njit(**_kw)
def stack_magnitude(v1, v2, t):
    n = v1.shape[0]
    m = v1.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            out[i, j] = np.sqrt(v1[i, j] ** 2 + v2[i, j] ** 2 + t[i, j] ** 2)
    return out


@njit(**_kw)
def kahan_sum(values):
    s = 0.0
    c = 0.0
    for k in range(values.shape[0]):
        y = values[k] - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


@njit(**_kw)
def weighted_sumsq(field, w):
    s = 0.0
    for i in range(field.shape[0]):
        s += w[i] * field[i] * field[i]
    return s
