"""Prognostic state, spectral/grid transforms, and kinematic diagnostics.

A :class:`State` stores the spectral coefficients of U = (v, T):

* ``vc0``  (n,)       barotropic velocity over the Stokes family (k = 0),
* ``vck``  (n, n_z)   baroclinic velocity over vector-Dirichlet modes
  times unit cosine profiles (k >= 1),
* ``tc``   (n, n_z)   temperature over Neumann modes times sine profiles.

Coefficients are the source of truth; grid fields are derived.  States
built through this module automatically satisfy the no-slip and lid
boundary conditions and div_H of the vertical average vanishes at the
null-space precision of the barotropic family.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .basis import TensorBasis
from .errors import ConfigurationError, NumericalError

W_LID_TOL = 1e-10


@dataclass
class GridField:
    """Values on the tensor grid plus the boundary-flavor tag."""

    values: np.ndarray
    kind: str  # "velocity" | "temperature" | "scalar"

    @property
    def shape(self):
        return self.values.shape


@dataclass
class State:
    basis: TensorBasis
    vc0: np.ndarray
    vck: np.ndarray
    tc: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        b = self.basis
        if self.vc0.shape != (b.n,) or self.vck.shape != (b.n, b.n_z):
            raise ConfigurationError("velocity coefficient shape mismatch")
        if self.tc.shape != (b.n, b.n_z):
            raise ConfigurationError("temperature coefficient shape mismatch")

    def check_finite(self):
        return (
            np.isfinite(self.vc0).all()
            and np.isfinite(self.vck).all()
            and np.isfinite(self.tc).all()
        )

    def copy(self):
        return replace(
            self, vc0=self.vc0.copy(), vck=self.vck.copy(), tc=self.tc.copy()
        )

    def __add__(self, other):
        return State(
            self.basis,
            self.vc0 + other.vc0,
            self.vck + other.vck,
            self.tc + other.tc,
            self.time,
        )

    def __sub__(self, other):
        return State(
            self.basis,
            self.vc0 - other.vc0,
            self.vck - other.vck,
            self.tc - other.tc,
            self.time,
        )

    def __mul__(self, a):
        return State(
            self.basis, a * self.vc0, a * self.vck, a * self.tc, self.time
        )

    __rmul__ = __mul__


def inner(a: "State", b: "State") -> float:
    """L2(M) inner product of two states (orthonormal coefficients)."""
    return float(
        np.dot(a.vc0, b.vc0) + np.sum(a.vck * b.vck) + np.sum(a.tc * b.tc)
    )


def zero_state(basis, time=0.0):
    return State(
        basis,
        np.zeros(basis.n),
        np.zeros((basis.n, basis.n_z)),
        np.zeros((basis.n, basis.n_z)),
        time,
    )


# ----------------------------------------------------------------------
# transforms


def velocity_to_grid(state: State, z_nodes=None):
    """Velocity grid values (2, nxc, nyc, nzc'); optionally on other z nodes."""
    b, g = state.basis, state.basis.grid
    cos_vals = (
        b._cos_nodes if z_nodes is None else b.vert_cos.values(z_nodes)
    )
    packed = np.outer(b.stokes_vecs @ state.vc0, cos_vals[0])
    packed += (b.dirvec_vecs @ state.vck) @ cos_vals[1:]
    nzl = cos_vals.shape[1]
    out = np.zeros((2, g.nxc, g.nyc, nzl))
    n = g.n_interior
    out[0][g.interior_mask] = packed[:n]
    out[1][g.interior_mask] = packed[n:]
    return out


def temperature_to_grid(state: State, z_nodes=None):
    b, g = state.basis, state.basis.grid
    sin_vals = (
        b._sin_nodes if z_nodes is None else b.vert_sin.values(z_nodes)
    )
    flat = (b.neumann_vecs @ state.tc) @ sin_vals
    return flat.reshape(g.nxc, g.nyc, -1)


def to_grid(state: State):
    """Public transform returning tagged grid fields."""
    return (
        GridField(velocity_to_grid(state), "velocity"),
        GridField(temperature_to_grid(state), "temperature"),
    )


def to_spectral(v_values, t_values, basis: TensorBasis, time=0.0):
    """Project grid fields onto the tensor basis (adjoint with weights)."""
    g = basis.grid
    if v_values.shape != (2, g.nxc, g.nyc, g.nzc):
        raise ConfigurationError("velocity grid shape mismatch")
    if t_values.shape != (g.nxc, g.nyc, g.nzc):
        raise ConfigurationError("temperature grid shape mismatch")
    packed = np.concatenate(
        [v_values[0][g.interior_mask], v_values[1][g.interior_mask]]
    )
    zc = packed @ (g.wz[None, :] * basis._cos_nodes).T  # (2nint, n_z+1)
    vc0 = g.cell_xy * (basis.stokes_vecs.T @ zc[:, 0])
    vck = g.cell_xy * (basis.dirvec_vecs.T @ zc[:, 1:])
    tflat = t_values.reshape(-1, g.nzc)
    zs = tflat @ (g.wz[None, :] * basis._sin_nodes).T
    tc = basis.neumann_vecs.T @ (g.wxy.ravel()[:, None] * zs)
    return State(basis, vc0, vck, tc, time)


# ----------------------------------------------------------------------
# barotropic / baroclinic split


def vertical_average(state: State):
    """Mean over depth; (2, nxc, nyc), divergence-free by construction."""
    b, g = state.basis, state.basis.grid
    packed = (b.stokes_vecs @ state.vc0) / np.sqrt(g.domain.h)
    return g.unpack_velocity(packed)


def baroclinic_remainder(state: State, z_nodes=None):
    """v - vbar on the grid; keeps only the k >= 1 coefficients."""
    b, g = state.basis, state.basis.grid
    cos_vals = (
        b._cos_nodes if z_nodes is None else b.vert_cos.values(z_nodes)
    )
    packed = (b.dirvec_vecs @ state.vck) @ cos_vals[1:]
    nzl = cos_vals.shape[1]
    out = np.zeros((2, g.nxc, g.nyc, nzl))
    n = g.n_interior
    out[0][g.interior_mask] = packed[:n]
    out[1][g.interior_mask] = packed[n:]
    return out


def field_vertical_average(grid, f):
    """(1/h) trapezoid integral along z of an arbitrary grid field."""
    return grid.integrate_z(f) / grid.domain.h


def div_vbar_norm(state: State):
    """L2(G) norm of the discrete divergence of the vertical average."""
    g = state.basis.grid
    vbar = vertical_average(state)
    d = g.divergence_matrix() @ g.pack_velocity(vbar)
    return float(np.sqrt(np.sum(g.wxy.ravel() * d * d)))


# ----------------------------------------------------------------------
# vertical velocity diagnosis


def integrated_velocity(state: State, z_nodes=None):
    """int_{-h}^{z} v dz' with the analytic per-mode primitive (exact)."""
    b, g = state.basis, state.basis.grid
    z = g.z.nodes if z_nodes is None else np.asarray(z_nodes)
    h = g.domain.h
    k = b.vert_sin.k
    # cosine modes integrate to sine modes; the constant mode to (z+h)
    sin_vals = b.vert_sin.values(z) if z_nodes is not None else b._sin_nodes
    prim0 = (z + h) / np.sqrt(h)
    packed = np.outer(b.stokes_vecs @ state.vc0, prim0)
    packed += ((b.dirvec_vecs @ state.vck) * (h / (k * np.pi))) @ sin_vals
    out = np.zeros((2, g.nxc, g.nyc, len(z)))
    n = g.n_interior
    out[0][g.interior_mask] = packed[:n]
    out[1][g.interior_mask] = packed[n:]
    return out


def diagnose_w(state: State, z_nodes=None, check=True):
    """w(v) = -div_H int_{-h}^{z} v dz'.

    Zero at the bottom exactly; the top trace is bounded by the residual
    divergence of the barotropic family (round-off), enforced here.
    """
    g = state.basis.grid
    iv = integrated_velocity(state, z_nodes)
    w = -g.div_xy(iv)
    if check:
        scale = max(1.0, float(np.abs(iv).max()))
        top = float(np.abs(w[..., -1]).max())
        if top > W_LID_TOL * scale:
            raise NumericalError(
                f"w upper-lid defect {top:.3e} exceeds {W_LID_TOL:.0e}"
                " (divergence contamination)"
            )
    return w


def cumtrapz_w_oracle(state: State, n_dense=2001):
    """Brute-force w via cumulative trapezoid on a dense z grid."""
    g = state.basis.grid
    z = np.linspace(-g.domain.h, 0.0, n_dense)
    v = velocity_to_grid(state, z_nodes=z)
    dz_panels = np.diff(z)
    shape = v.shape[1:]
    iv = np.stack(
        [
            kernels.cumtrapz_z(c.reshape(-1, n_dense), dz_panels).reshape(shape)
            for c in v
        ]
    )
    return -g.div_xy(iv)


# ----------------------------------------------------------------------
# projections


def leray_project_2d(grid, field):
    """P_G on a horizontal 2-vector field (zero lateral trace)."""
    return grid.leray_project(field)


def hydrostatic_project(grid, field3d):
    """P_sigma f = f_tilde + P_G f_bar for a (2, nxc, nyc, nzc) field."""
    fbar = field_vertical_average(grid, field3d)
    ftilde = field3d - fbar[..., None]
    pbar = grid.leray_project(fbar)
    return ftilde + pbar[..., None]


# ----------------------------------------------------------------------
# pressure reconstruction


def reconstruct_pressure(grid, p_s, t_values, constants):
    """Full pressure from the surface pressure and the temperature field.

    p = p_s + g * int_z^0 rho dz' with rho = rho0 (1 - beta_T * theta),
    theta being the stored temperature deviation (theta = 0 means the
    reference density).  ``t_values`` may be grid values or a State.
    """
    rho0, beta, grav = constants.rho0, constants.beta_T, constants.g
    z = grid.z.nodes
    if isinstance(t_values, State):
        b = t_values.basis
        k = b.vert_sin.k
        h = grid.domain.h
        fac = h / (k * np.pi)
        cos_vals = b._cos_nodes[1:]
        const = np.sqrt(2.0 / h) * ((-1.0) ** k)
        zmap = fac[:, None] * (cos_vals - const[:, None])
        cum = ((b.neumann_vecs @ t_values.tc) @ zmap).reshape(
            grid.nxc, grid.nyc, grid.nzc
        )
    else:
        # descending cumulative trapezoid from the surface
        flat = t_values.reshape(-1, grid.nzc)[:, ::-1]
        panels = np.diff(z)[::-1]
        cum = kernels.cumtrapz_z(np.ascontiguousarray(flat), panels)[
            :, ::-1
        ].reshape(grid.nxc, grid.nyc, grid.nzc)
    hydro = grav * rho0 * (-z)[None, None, :] - grav * rho0 * beta * cum
    return p_s[:, :, None] + hydro


# ----------------------------------------------------------------------
# truncation and random states


def truncate_Pn(state: State, n_prime: int):
    """Zero all coefficients with horizontal index above n_prime."""
    if n_prime > state.basis.n:
        raise ConfigurationError(
            f"truncation {n_prime} exceeds basis size {state.basis.n}"
        )
    out = state.copy()
    out.vc0[n_prime:] = 0.0
    out.vck[n_prime:, :] = 0.0
    out.tc[n_prime:, :] = 0.0
    return out


def spectral_norms(state: State):
    """Diagonal (coefficient-space) norms used by the energy ledger.

    Horizontal derivative norms are the operator-energy quantities
    sum(lambda^p |c|^2); vertical ones use the exact mode factors.
    """
    b = state.basis
    kz = b.vert_sin.k * np.pi / b.grid.domain.h
    lam_s = b.stokes_vals
    lam_d = b.dirvec_vals[:, None]
    lam_n = b.neumann_vals[:, None]
    c0sq = state.vc0**2
    cksq = state.vck**2
    tcsq = state.tc**2
    kz2 = kz[None, :] ** 2
    l2 = c0sq.sum() + cksq.sum() + tcsq.sum()
    gh = (lam_s * c0sq).sum() + (lam_d * cksq).sum() + (lam_n * tcsq).sum()
    dz = (kz2 * cksq).sum() + (kz2 * tcsq).sum()
    dzz = (kz2**2 * cksq).sum() + (kz2**2 * tcsq).sum()
    ah = (lam_s**2 * c0sq).sum() + (lam_d**2 * cksq).sum() + (
        lam_n**2 * tcsq
    ).sum()
    h1zh1xy = (
        c0sq.sum()
        + (lam_s * c0sq).sum()
        + ((1.0 + kz2) * (1.0 + lam_d) * cksq).sum()
        + ((1.0 + kz2) * (1.0 + lam_n) * tcsq).sum()
    )
    return {
        "l2": np.sqrt(l2),
        "grad_h": np.sqrt(gh),
        "dz": np.sqrt(dz),
        "dzz": np.sqrt(dzz),
        "h1": np.sqrt(l2 + gh + dz),
        "ah": np.sqrt(ah),
        "h1z_h1xy": np.sqrt(h1zh1xy),
    }


_CKP_MAGIC = b"HSGS-CKP1"


def save_checkpoint(path, state: State, config_hash: bytes):
    """Binary checkpoint: magic, config hash, time, coefficient arrays."""
    import os
    import struct

    if len(config_hash) != 32:
        raise ConfigurationError("config hash must be 32 bytes (sha-256)")
    b = state.basis
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(_CKP_MAGIC)
        f.write(config_hash)
        f.write(struct.pack("<d", state.time))
        f.write(struct.pack("<2q", b.n, b.n_z))
        for arr in (state.vc0, state.vck, state.tc):
            f.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    os.replace(tmp, path)


def load_checkpoint(path, basis: TensorBasis, expect_hash: bytes = None):
    import struct

    with open(path, "rb") as f:
        if f.read(len(_CKP_MAGIC)) != _CKP_MAGIC:
            raise ConfigurationError(f"{path}: bad checkpoint magic")
        chash = f.read(32)
        if expect_hash is not None and chash != expect_hash:
            raise ConfigurationError(f"{path}: checkpoint config hash mismatch")
        (t,) = struct.unpack("<d", f.read(8))
        n, n_z = struct.unpack("<2q", f.read(16))
        if (n, n_z) != (basis.n, basis.n_z):
            raise ConfigurationError(
                f"{path}: truncation ({n},{n_z}) does not match basis"
            )
        vc0 = np.frombuffer(f.read(8 * n), dtype="<f8").copy()
        vck = (
            np.frombuffer(f.read(8 * n * n_z), dtype="<f8")
            .reshape(n, n_z)
            .copy()
        )
        tc = (
            np.frombuffer(f.read(8 * n * n_z), dtype="<f8")
            .reshape(n, n_z)
            .copy()
        )
    return State(basis, vc0, vck, tc, t), chash


def mixed_spectral_norm_sq(state: State, sz: int, rxy: int) -> float:
    """Squared H^sz_z H^rxy_xy norm from the diagonal representation.

    Per mode the weight is (sum_{a<=sz} kappa^{2a}) (sum_{b<=rxy}
    lambda^b), kappa the vertical wavenumber and lambda the horizontal
    eigenvalue, i.e. all mixed derivatives up to the given orders.
    """
    b = state.basis
    kz2 = (b.vert_sin.k * np.pi / b.grid.domain.h) ** 2
    zfac = sum(kz2**a for a in range(sz + 1))
    xfac = lambda lam: sum(lam**p for p in range(rxy + 1))
    out = float(np.sum(xfac(b.stokes_vals) * state.vc0**2))
    out += float(
        np.sum(
            np.outer(xfac(b.dirvec_vals), zfac) * state.vck**2
        )
    )
    out += float(
        np.sum(np.outer(xfac(b.neumann_vals), zfac) * state.tc**2)
    )
    return out


def dz_state_fields(state: State, order=1, z_nodes=None):
    """Analytic vertical derivative of (v, T) on the grid.

    Order 1 maps cosine profiles to sine ones and vice versa; order 2 is
    diagonal.  Returns (v_field, t_field).
    """
    b, g = state.basis, state.basis.grid
    kz = b.vert_sin.k * np.pi / g.domain.h
    z = g.z.nodes if z_nodes is None else np.asarray(z_nodes)
    sin_vals = b.vert_sin.values(z)
    cos_vals = b.vert_cos.values(z)
    if order == 1:
        v_packed = ((b.dirvec_vecs @ state.vck) * (-kz)) @ sin_vals
        t_flat = ((b.neumann_vecs @ state.tc) * kz) @ cos_vals[1:]
    elif order == 2:
        v_packed = ((b.dirvec_vecs @ state.vck) * (-(kz**2))) @ cos_vals[1:]
        t_flat = ((b.neumann_vecs @ state.tc) * (-(kz**2))) @ sin_vals
    else:
        raise ConfigurationError("order must be 1 or 2")
    out = np.zeros((2, g.nxc, g.nyc, len(z)))
    nn = g.n_interior
    out[0][g.interior_mask] = v_packed[:nn]
    out[1][g.interior_mask] = v_packed[nn:]
    return out, t_flat.reshape(g.nxc, g.nyc, len(z))


def random_state(basis, rng, h1_norm=1.0, h2z_norm=None, decay=1.5, time=0.0):
    """Band-limited random data with prescribed H1 (and H2_z L2) norms.

    Coefficients decay like (1+lambda)^(-decay/2) in the horizontal index
    and (1+k)^(-decay) vertically.  When ``h2z_norm`` is given, the
    barotropic and baroclinic+temperature groups are rescaled jointly so
    both norms are met exactly (raises if the pair is infeasible).
    """
    b = basis
    kz = b.vert_sin.k * np.pi / b.grid.domain.h
    damp = lambda lam: (1.0 + lam) ** (-decay / 2.0)
    vc0 = rng.standard_normal(b.n) * damp(b.stokes_vals)
    zdamp = (1.0 + np.arange(1, b.n_z + 1)) ** (-decay)
    vck = rng.standard_normal((b.n, b.n_z)) * np.outer(
        damp(b.dirvec_vals), zdamp
    )
    tc = rng.standard_normal((b.n, b.n_z)) * np.outer(
        damp(b.neumann_vals), zdamp
    )
    st = State(b, vc0, vck, tc, time)
    nrm = spectral_norms(st)
    if h2z_norm is None:
        scale = h1_norm / max(nrm["h1"], 1e-300)
        return State(b, scale * vc0, scale * vck, scale * tc, time)
    kz2 = kz[None, :] ** 2
    # group A: barotropic (no z-dependence), group B: k >= 1 content
    a_h1 = ((1.0 + b.stokes_vals) * vc0**2).sum()
    a_h2 = (vc0**2).sum()
    b_h1 = (
        ((1.0 + b.dirvec_vals[:, None] + kz2) * vck**2).sum()
        + ((1.0 + b.neumann_vals[:, None] + kz2) * tc**2).sum()
    )
    b_h2 = ((1.0 + kz2 + kz2**2) * (vck**2 + tc**2)).sum()
    det = a_h1 * b_h2 - a_h2 * b_h1
    ca2 = (h1_norm**2 * b_h2 - h2z_norm**2 * b_h1) / det
    cb2 = (h2z_norm**2 * a_h1 - h1_norm**2 * a_h2) / det
    if ca2 <= 0 or cb2 <= 0:
        raise ConfigurationError(
            "requested (H1, H2_z L2) norm pair is infeasible for this draw"
        )
    ca, cb = np.sqrt(ca2), np.sqrt(cb2)
    return State(b, ca * vc0, cb * vck, cb * tc, time)
