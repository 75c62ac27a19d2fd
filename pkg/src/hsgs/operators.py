"""The semigroup generator, transport nonlinearity, and lower-order terms.

The transport term is evaluated pseudo-spectrally: states are synthesised
on a vertically refined collocation grid (dealias factor >= 1; products
of two modes stay below the quadrature's exactness band), combined in the
skew-symmetric split

    adv(v, w; phi) = 1/2 [ v . grad phi + w dz phi ]
                   + 1/2 [ div(v phi) + dz(w phi) ]

with the divergence-form derivatives taken as the exact SBP adjoints of
the advective ones, and projected back onto the basis.  The split makes
<B(U, U#), U#> vanish at round-off for any pair of in-span states, which
is the discrete form of the transport cancellation; the horizontal grid
needs no padding because the finite-difference eigenvectors are already
represented on their native nodes.
"""

from dataclasses import dataclass, field

import numpy as np

from .basis import TensorBasis
from .domain import Axis, apply_along
from .errors import ConfigurationError
from .state import (
    State,
    baroclinic_remainder,
    integrated_velocity,
    temperature_to_grid,
    vertical_average,
    velocity_to_grid,
)


class ZCollocation:
    """Vertical collocation data (nodes, weights, mode values) for one axis."""

    def __init__(self, basis: TensorBasis, n_panels):
        h = basis.grid.domain.h
        self.axis = Axis(h, n_panels, lo=-h)
        self.nodes = self.axis.nodes
        self.weights = self.axis.weights
        self.cos_vals = basis.vert_cos.values(self.nodes)
        self.sin_vals = basis.vert_sin.values(self.nodes)


@dataclass
class OperatorContext:
    """Physical constants and discretisation knobs shared by the operators."""

    basis: TensorBasis
    nu_v: float = 1.0
    nu_T: float = 1.0
    k0: float = 0.0
    rho0: float = 1.0
    beta_T: float = 0.0
    g: float = 9.81
    T_r: float = 0.0
    dealias: float = 1.5
    _zpad: ZCollocation = field(default=None, repr=False)

    def __post_init__(self):
        if self.nu_v <= 0 or self.nu_T <= 0:
            raise ConfigurationError("viscosity/diffusivity must be positive")
        if self.k0 < 0:
            raise ConfigurationError("Coriolis parameter must be >= 0")
        if self.dealias < 1.0:
            raise ConfigurationError("dealias factor must be >= 1")

    @property
    def zpad(self) -> ZCollocation:
        if self._zpad is None:
            n_pad = int(np.ceil(self.dealias * self.basis.grid.domain.Nz))
            self._zpad = ZCollocation(self.basis, n_pad)
        return self._zpad


def project_velocity(basis: TensorBasis, values, zc: ZCollocation = None):
    """Project a (2, nxc, nyc, nz') velocity field onto the basis."""
    g = basis.grid
    wz = g.wz if zc is None else zc.weights
    cos_vals = basis._cos_nodes if zc is None else zc.cos_vals
    packed = np.concatenate(
        [values[0][g.interior_mask], values[1][g.interior_mask]]
    )
    zcoef = packed @ (wz[None, :] * cos_vals).T
    vc0 = g.cell_xy * (basis.stokes_vecs.T @ zcoef[:, 0])
    vck = g.cell_xy * (basis.dirvec_vecs.T @ zcoef[:, 1:])
    return vc0, vck


def project_temperature(basis: TensorBasis, values, zc: ZCollocation = None):
    g = basis.grid
    wz = g.wz if zc is None else zc.weights
    sin_vals = basis._sin_nodes if zc is None else zc.sin_vals
    zs = values.reshape(-1, values.shape[-1]) @ (wz[None, :] * sin_vals).T
    return basis.neumann_vecs.T @ (g.wxy.ravel()[:, None] * zs)


# ----------------------------------------------------------------------
# linear operator


def apply_AH(ctx: OperatorContext, st: State) -> State:
    """Hydrostatic Stokes operator: diagonal in the spectral coordinates."""
    b = ctx.basis
    return State(
        b,
        b.stokes_vals * st.vc0,
        b.dirvec_vals[:, None] * st.vck,
        b.neumann_vals[:, None] * st.tc,
        st.time,
    )


# ----------------------------------------------------------------------
# transport nonlinearity


def _skew_advect(grid, zc, v, w, phi, dz_phi):
    """Skew split of v . grad_H phi + w dz phi on the collocation grid."""
    adv = v[0] * grid.dx(phi) + v[1] * grid.dy(phi) + w * dz_phi
    divf = (
        apply_along(grid.x.D_adj, v[0] * phi, 0)
        + apply_along(grid.y.D_adj, v[1] * phi, 1)
        + apply_along(zc.axis.D_adj, w * phi, -1)
    )
    return 0.5 * (adv + divf)


def transport_fields(ctx: OperatorContext, st: State, st_b: State):
    """Grid-space transport terms (velocity pair, temperature) before
    projection; exposed for the consistency diagnostics."""
    b, g = ctx.basis, ctx.basis.grid
    zc = ctx.zpad
    v = velocity_to_grid(st, zc.nodes)
    iv = integrated_velocity(st, zc.nodes)
    w = -g.div_xy(iv)
    vb = velocity_to_grid(st_b, zc.nodes)
    tb = temperature_to_grid(st_b, zc.nodes)
    # collocation-grid vertical derivative: the exact SBP partner of the
    # divergence form, which is what makes the split energy-neutral
    dvb = np.stack(
        [
            apply_along(zc.axis.D, vb[0], -1),
            apply_along(zc.axis.D, vb[1], -1),
        ]
    )
    dtb = apply_along(zc.axis.D, tb, -1)
    sv = np.stack(
        [
            _skew_advect(g, zc, v, w, vb[0], dvb[0]),
            _skew_advect(g, zc, v, w, vb[1], dvb[1]),
        ]
    )
    stt = _skew_advect(g, zc, v, w, tb, dtb)
    return sv, stt


def nonlinear_B(ctx: OperatorContext, st: State, st_b: State) -> State:
    """B(U, U#) projected onto the basis (the projection applies P_sigma)."""
    sv, stt = transport_fields(ctx, st, st_b)
    zc = ctx.zpad
    vc0, vck = project_velocity(ctx.basis, sv, zc)
    tc = project_temperature(ctx.basis, stt, zc)
    return State(ctx.basis, vc0, vck, tc, st.time)


# ----------------------------------------------------------------------
# lower-order terms


def coriolis_field(ctx: OperatorContext, v_values):
    """k x v = k0 (-v2, v1) pointwise, before any projection."""
    return ctx.k0 * np.stack([-v_values[1], v_values[0]])


def coriolis_E(ctx: OperatorContext, st: State) -> State:
    """Projected Coriolis term (P_sigma k x v, 0)."""
    b = ctx.basis
    if ctx.k0 == 0.0:
        return State(
            b, np.zeros(b.n), np.zeros((b.n, b.n_z)), np.zeros((b.n, b.n_z)),
            st.time,
        )
    rot = coriolis_field(ctx, velocity_to_grid(st))
    vc0, vck = project_velocity(b, rot)
    return State(b, vc0, vck, np.zeros((b.n, b.n_z)), st.time)


def cumulative_temperature_gradient(ctx: OperatorContext, st: State):
    """grad_H of int_z^0 T dz' on the grid, via the analytic primitive."""
    b, g = ctx.basis, ctx.basis.grid
    h = g.domain.h
    k = b.vert_sin.k
    fac = h / (k * np.pi)
    const = np.sqrt(2.0 / h) * ((-1.0) ** k)
    zmap = fac[:, None] * (b._cos_nodes[1:] - const[:, None])
    cum = ((b.neumann_vecs @ st.tc) @ zmap).reshape(g.nxc, g.nyc, g.nzc)
    return np.stack([g.dx(cum), g.dy(cum)])


def baroclinic_pressure_Apr(ctx: OperatorContext, st: State) -> State:
    """(-P_sigma beta_T g int_z^0 grad_H T dz', 0), projected."""
    b = ctx.basis
    if ctx.beta_T == 0.0:
        return State(
            b, np.zeros(b.n), np.zeros((b.n, b.n_z)), np.zeros((b.n, b.n_z)),
            st.time,
        )
    gradcum = -ctx.beta_T * ctx.g * cumulative_temperature_gradient(ctx, st)
    vc0, vck = project_velocity(b, gradcum)
    return State(b, vc0, vck, np.zeros((b.n, b.n_z)), st.time)


def project_forcing(ctx: OperatorContext, f_v=None, f_T=None) -> State:
    """Project grid forcing fields (P_sigma f_v, f_T) onto the basis."""
    b, g = ctx.basis, ctx.basis.grid
    vc0 = np.zeros(b.n)
    vck = np.zeros((b.n, b.n_z))
    tc = np.zeros((b.n, b.n_z))
    if f_v is not None:
        if f_v.shape != (2, g.nxc, g.nyc, g.nzc):
            raise ConfigurationError("velocity forcing shape mismatch")
        vc0, vck = project_velocity(b, f_v)
    if f_T is not None:
        if f_T.shape != (g.nxc, g.nyc, g.nzc):
            raise ConfigurationError("temperature forcing shape mismatch")
        tc = project_temperature(b, f_T)
    return State(b, vc0, vck, tc)


def assemble_F(ctx: OperatorContext, st: State, forcing: State = None) -> State:
    """F(U) = A_pr U + E U - F_U with F_U already projected."""
    out = baroclinic_pressure_Apr(ctx, st) + coriolis_E(ctx, st)
    if forcing is not None:
        out = out - forcing
    out.time = st.time
    return out


# ----------------------------------------------------------------------
# barotropic interaction and surface pressure


def barotropic_N(ctx: OperatorContext, st: State):
    """N(vtilde) = (1/h) int ( vtilde . grad vtilde + div vtilde vtilde )."""
    g = ctx.basis.grid
    zc = ctx.zpad
    vt = baroclinic_remainder(st, zc.nodes)
    div = g.div_xy(vt)
    integrand = np.stack(
        [
            vt[0] * g.dx(vt[0]) + vt[1] * g.dy(vt[0]) + div * vt[0],
            vt[0] * g.dx(vt[1]) + vt[1] * g.dy(vt[1]) + div * vt[1],
        ]
    )
    return (integrand @ zc.weights) / g.domain.h


def mean_forcing_velocity(ctx: OperatorContext, st: State, f_v=None):
    """The depth-averaged velocity forcing -k x vbar + thermal drive + fbar."""
    g = ctx.basis.grid
    vbar = vertical_average(st)
    out = -coriolis_field(ctx, vbar)
    if ctx.beta_T != 0.0:
        gradcum = cumulative_temperature_gradient(ctx, st)
        out = out + (ctx.beta_T * ctx.g / g.domain.h) * (gradcum @ g.wz)
    if f_v is not None:
        out = out + g.integrate_z(f_v) / g.domain.h
    return out


def recover_surface_pressure(ctx: OperatorContext, st: State, f_v=None):
    """Mean-zero surface pressure from the barotropic momentum balance.

    Solves the SBP Poisson problem implied by applying the complement of
    the Leray projection to

        nu_v Lap_H vbar - vbar . grad vbar - N(vtilde) + A F_v(U).

    Returns (p_s, grad_norm) with p_s shifted to zero trapezoid mean and
    grad_norm the L2(G) norm of the gradient part (computed before the
    gauge shift, so it is exactly rho0 * || (1 - P_G) r ||).
    """
    g = ctx.basis.grid
    vbar = vertical_average(st)
    visc = ctx.nu_v * np.stack(
        [g.lap_dirichlet_xy(vbar[0]), g.lap_dirichlet_xy(vbar[1])]
    )
    adv = np.stack(
        [
            vbar[0] * g.dx(vbar[0]) + vbar[1] * g.dy(vbar[0]),
            vbar[0] * g.dx(vbar[1]) + vbar[1] * g.dy(vbar[1]),
        ]
    )
    r = visc - adv - barotropic_N(ctx, st) + mean_forcing_velocity(ctx, st, f_v)
    r[:, ~g.interior_mask] = 0.0
    _, resid, q = g.leray_decompose(r)
    p_s = ctx.rho0 * q
    p_s = p_s - g.integrate_xy(p_s) / (g.domain.Lx * g.domain.Ly)
    grad_norm = ctx.rho0 * np.sqrt(
        g.cell_xy * float(np.sum(resid[:, g.interior_mask] ** 2))
    )
    return p_s, grad_norm
