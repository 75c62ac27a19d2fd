"""Pure-numpy reference implementations of the hot kernels.

Semantics here are the contract; the numba twins in ``_numba.py`` must
agree bit-for-bit up to floating-point associativity (tested).
"""

import math

import numpy as np


def horizontal_lq_profile(field, wxy, q):
    """Per-z horizontal L^q norms of a scalar sample array.

    field: (nxy, nz) values, wxy: (nxy,) quadrature weights, q >= 1.
    Returns (nz,) array with (sum_xy w |f|^q)^(1/q).

    Large exponents (q = 132 is in routine use) are evaluated in a
    max-scaled form to avoid overflow.
    """
    absf = np.abs(field)
    peak = absf.max(axis=0)
    out = np.zeros(field.shape[1])
    nz = field.shape[1]
    for j in range(nz):
        p = peak[j]
        if p == 0.0:
            continue
        s = np.dot(wxy, (absf[:, j] / p) ** q)
        out[j] = p * s ** (1.0 / q)
    return out


def horizontal_linf_profile(field):
    """Per-z grid maximum of |field|; field: (nxy, nz)."""
    return np.abs(field).max(axis=0)


def cumtrapz_z(field, wz_dz):
    """Cumulative trapezoid integral along the last axis.

    field: (nxy, nz); wz_dz: (nz-1,) panel widths. Entry j holds the
    integral from node 0 up to node j (entry 0 is exactly zero).
    """
    nxy, nz = field.shape
    out = np.zeros_like(field)
    acc = np.zeros(nxy)
    for j in range(1, nz):
        acc = acc + 0.5 * wz_dz[j - 1] * (field[:, j - 1] + field[:, j])
        out[:, j] = acc
    return out


def stack_magnitude(v1, v2, t):
    """Pointwise magnitude sqrt(v1^2 + v2^2 + t^2) of the prognostic stack."""
    return np.sqrt(v1 * v1 + v2 * v2 + t * t)


def kahan_sum(values):
    """Compensated (Kahan) summation of a 1-D array."""
    s = 0.0
    c = 0.0
    for x in values:
        y = x - c
        t = s + y
        c = (t - s) - y
        s = t
    return s


def weighted_sumsq(field, w):
    """sum_i w_i * field_i^2 for flattened arrays of equal length."""
    return float(np.dot(w, field * field))


def _fsum_reference(values):
    """math.fsum fallback used only in tests as an extra oracle."""
    return math.fsum(values)
