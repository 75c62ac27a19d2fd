"""Mixed-norm machinery L^p_z L^q_xy with optional derivative orders.

Grid-side norms: the inner horizontal L^q is trapezoid quadrature per
z node, the outer vertical L^p again trapezoid (p = inf takes the max
over nodes).  L^inf-type quantities are grid maxima, i.e. lower bounds
of the true sup that are adequate for band-limited fields.

Fractional-order Sobolev quantities never appear here; they are diagonal
in the eigenbasis and live in :mod:`hsgs.state`.  Derivatives requested
through :class:`NormSpec` are applied as grid operators for raw fields
and analytically (per vertical mode) when the input is a State.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError
from .state import (
    State,
    dz_state_fields,
    temperature_to_grid,
    velocity_to_grid,
)


@dataclass(frozen=True)
class NormSpec:
    """Exponents and derivative orders of one anisotropic norm."""

    p: float  # vertical exponent, np.inf allowed
    q: float  # horizontal exponent
    dz_order: int = 0
    dxy_order: int = 0

    def __post_init__(self):
        if not (self.p >= 1 or self.p == np.inf):
            raise ConfigurationError("p must be in [1, inf]")
        if not (self.q >= 1 or self.q == np.inf):
            raise ConfigurationError("q must be in [1, inf]")
        if self.dz_order not in (0, 1, 2) or self.dxy_order not in (0, 1, 2):
            raise ConfigurationError("derivative orders must be 0, 1 or 2")


def _component_list(grid, field):
    """Split scalar/vector grid input into scalar components."""
    f = np.asarray(field)
    if f.shape == (grid.nxc, grid.nyc, grid.nzc):
        return [f]
    if f.shape == (2, grid.nxc, grid.nyc, grid.nzc):
        return [f[0], f[1]]
    raise ConfigurationError(f"unexpected field shape {f.shape}")


def _apply_dxy(grid, comps, order):
    if order == 0:
        return comps
    out = []
    for c in comps:
        if order == 1:
            out.extend([grid.dx(c), grid.dy(c)])
        else:
            out.extend(
                [
                    grid.dx(grid.dx(c)),
                    grid.dx(grid.dy(c)),
                    grid.dy(grid.dx(c)),
                    grid.dy(grid.dy(c)),
                ]
            )
    return out


def _magnitude(comps):
    if len(comps) == 3 and comps[0].shape == comps[1].shape == comps[2].shape:
        shape = comps[0].shape
        flat = [
            np.ascontiguousarray(c.reshape(-1, shape[-1])) for c in comps
        ]
        return kernels.stack_magnitude(*flat).reshape(shape)
    out = comps[0] ** 2
    for c in comps[1:]:
        out = out + c**2
    return np.sqrt(out)


def aniso_norm(grid, field, spec: NormSpec):
    """Evaluate one mixed norm of a grid field (scalar or 2-vector).

    Vector inputs and derivative stacks enter through their pointwise
    Euclidean magnitude before the L^q/L^p integrations.
    """
    comps = _component_list(grid, field)
    for _ in range(spec.dz_order):
        comps = [grid.dz(c) for c in comps]
    comps = _apply_dxy(grid, comps, spec.dxy_order)
    mag = _magnitude(comps)
    if not np.isfinite(mag).all():
        raise ConfigurationError("non-finite field in aniso_norm")
    return _profile_norm(grid, mag, spec.p, spec.q)


def _profile_norm(grid, mag, p, q):
    flat = np.ascontiguousarray(mag.reshape(-1, mag.shape[-1]))
    wxy = np.ascontiguousarray(grid.wxy.reshape(-1))
    if q == np.inf:
        prof = kernels.horizontal_linf_profile(flat)
    else:
        prof = kernels.horizontal_lq_profile(flat, wxy, float(q))
    if p == np.inf:
        return float(prof.max())
    peak = prof.max()
    if peak == 0.0:
        return 0.0
    # same max-scaled form as the kernels, robust for p up to 132
    return float(peak * (grid.wz @ (prof / peak) ** p) ** (1.0 / p))


def state_aniso_norm(st: State, spec: NormSpec, part="stack"):
    """Mixed norm of a State (or one of its parts).

    part: "stack" (|U| pointwise), "v", "T".  Vertical derivatives are
    analytic per mode; horizontal ones are the grid operators.
    """
    grid = st.basis.grid
    if spec.dz_order == 0:
        v = velocity_to_grid(st)
        t = temperature_to_grid(st)
    else:
        v, t = dz_state_fields(st, order=spec.dz_order)
    if part == "stack":
        comps = [v[0], v[1], t]
    elif part == "v":
        comps = [v[0], v[1]]
    elif part == "T":
        comps = [t]
    else:
        raise ConfigurationError(f"unknown part {part!r}")
    comps = _apply_dxy(grid, comps, spec.dxy_order)
    return _profile_norm(grid, _magnitude(comps), spec.p, spec.q)


def norm_linfz_l4(st: State, part="stack"):
    return state_aniso_norm(st, NormSpec(np.inf, 4), part)


def norm_h1z_l4(st: State, part="stack"):
    """H1_z L4_xy: sqrt of L2_z L4 squared plus L2_z L4 of dz, squared."""
    a = state_aniso_norm(st, NormSpec(2, 4), part)
    b = state_aniso_norm(st, NormSpec(2, 4, dz_order=1), part)
    return float(np.hypot(a, b))


def norm_lq(st: State, q, part="v"):
    return state_aniso_norm(st, NormSpec(q, q), part)


def norm_linf(st: State, part="v"):
    return state_aniso_norm(st, NormSpec(np.inf, np.inf), part)


def grid_field_lq(grid, field, q):
    """Plain L^q(M) norm of a raw grid field."""
    comps = _component_list(grid, field)
    return _profile_norm(grid, _magnitude(comps), q, q)
