"""Transport-noise operators, the truncated Wiener driver, and condition
checkers.

The noise acts mode-wise on a truncated cylindrical Wiener process with K
coordinates:

    sigma1(v) e_k = (Psi_k . grad_H) vtilde + (Phi_k . grad_H) vbar + h_k(v)
    sigma2(U) e_k = (PsiT_k . grad_H) T + g_k(T, v)

with affine parts

    h_k(v) = zeta_k vbar + nu_k vtilde + chi_k
    g_k    = gamma_k T + Theta_k : grad_H vbar + zhat_k vbar + nhat_k vtilde
             + chat_k.

The default family keeps every structural hypothesis exactly at the
discrete level: Psi_k and PsiT_k are constant directions times an
optional trigonometric modulation, Phi_k are polynomial-in-z profiles
with zero derivative at the lids, the vertical mean of zeta_k's ripple
vanishes under the trapezoid rule, nu_k is z-independent, and all
temperature affine parts vanish on the lids.  Consequently the vertical
average of sigma1 is divergence-free whenever div_H vbar = 0, at
round-off (the commuting tensor derivatives make (c . grad) preserve the
discrete divergence constraint exactly).
"""

from dataclasses import dataclass

import numpy as np

from .basis import TensorBasis
from .errors import ConfigurationError
from .operators import project_temperature, project_velocity
from .state import (
    State,
    baroclinic_remainder,
    dz_state_fields,
    mixed_spectral_norm_sq,
    temperature_to_grid,
    vertical_average,
)


def wiener_increments(rng, K, dt):
    """K independent N(0, dt) increments; reproducible under a fixed seed."""
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    if K == 0:
        return np.zeros(0)
    return rng.normal(0.0, np.sqrt(dt), size=K)


def path_rng(seed, path_index):
    """Independent per-path stream derived from (seed, path index)."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(path_index,))
    )


@dataclass
class NoiseParams:
    """Named family + parameter list (the config-file representation)."""

    family: str = "trig"
    K: int = 8
    amp_psi: float = 0.0
    amp_phi: float = 0.0
    amp_psiT: float = 0.0
    amp_zeta: float = 0.0
    amp_nu: float = 0.0
    amp_chi: float = 0.0
    amp_gamma: float = 0.0
    amp_theta: float = 0.0
    amp_zhat: float = 0.0
    amp_nhat: float = 0.0
    amp_chat: float = 0.0
    decay: float = 2.0
    ripple: float = 0.0
    aligned: bool = True
    seed: int = 0

    def to_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


class NoiseModel:
    """Materialised coefficient fields of one noise family on a grid."""

    def __init__(self, basis: TensorBasis, params: NoiseParams):
        self.basis = basis
        self.params = params
        g = basis.grid
        K = params.K
        self.K = K
        h = g.domain.h
        rng = np.random.default_rng(params.seed)
        k_idx = np.arange(1, K + 1)
        amp = lambda a: a * k_idx ** (-params.decay)
        if params.aligned:
            dirs = np.tile(np.array([1.0, 0.0]), (K, 1))
        else:
            ang = 2.399963229728653 * k_idx  # golden-angle sweep
            dirs = np.stack([np.cos(ang), np.sin(ang)], axis=1)

        x = g.x.nodes[:, None] / g.domain.Lx
        y = g.y.nodes[None, :] / g.domain.Ly
        rip = params.ripple
        mods = np.empty((K, g.nxc, g.nyc))
        for k in range(K):
            a, b = 1 + k % 3, 1 + (k // 3) % 3
            ph = rng.uniform(0, 2 * np.pi)
            mods[k] = (1.0 - rip) + rip * np.cos(
                2 * np.pi * (a * x + b * y) + ph
            )

        # velocity transport: Psi_k constant direction x modulation
        self.psi_xy = amp(params.amp_psi)[:, None, None, None] * (
            dirs[:, :, None, None] * mods[:, None, :, :]
        )
        # Phi_k: polynomial-in-z 2-vector profiles, dz Phi = 0 at the
        # lids; the profile direction follows the family alignment
        zeta_z = (g.z.nodes + h) / h
        q = zeta_z**2 * (3.0 - 2.0 * zeta_z)
        dq = 6.0 * zeta_z * (1.0 - zeta_z) / h
        d2q = (6.0 - 12.0 * zeta_z) / h**2
        alpha = rng.uniform(0.3, 1.0, size=K)
        beta = rng.uniform(-0.7, 0.7, size=K)
        ap = amp(params.amp_phi)
        prof = alpha[:, None] + beta[:, None] * q[None, :]
        self.phi_z = ap[:, None, None] * dirs[:, :, None] * prof[:, None, :]
        self.dphi_z = (
            ap[:, None, None]
            * dirs[:, :, None]
            * (beta[:, None] * dq[None, :])[:, None, :]
        )
        self.d2phi_z = (
            ap[:, None, None]
            * dirs[:, :, None]
            * (beta[:, None] * d2q[None, :])[:, None, :]
        )

        # temperature transport PsiT_k (z-independent profile)
        self.psiT_xy = amp(params.amp_psiT)[:, None, None, None] * (
            dirs[:, :, None, None] * mods[:, None, :, :]
        )

        # smooth trig z-profiles used by the affine parts
        cos1 = np.cos(np.pi * (g.z.nodes + h) / h)
        dcos1 = -np.pi / h * np.sin(np.pi * (g.z.nodes + h) / h)
        d2cos1 = -((np.pi / h) ** 2) * cos1
        sin1 = np.sin(np.pi * (g.z.nodes + h) / h)
        dsin1 = np.pi / h * np.cos(np.pi * (g.z.nodes + h) / h)
        d2sin1 = -((np.pi / h) ** 2) * sin1

        # h_k affine parts
        self.zeta_const = amp(params.amp_zeta)
        self.zeta_xy = 0.5 * amp(params.amp_zeta)[:, None, None] * mods
        self.zeta_z = np.tile(cos1, (K, 1))
        self.dzeta_z = np.tile(dcos1, (K, 1))
        self.d2zeta_z = np.tile(d2cos1, (K, 1))
        self.nu_xy = amp(params.amp_nu)[:, None, None] * mods
        self.chi_xy = amp(params.amp_chi)[:, None, None, None] * (
            dirs[:, :, None, None] * mods[:, None, :, :]
        )
        self.chi_z = np.tile(cos1, (K, 1))
        self.dchi_z = np.tile(dcos1, (K, 1))
        self.d2chi_z = np.tile(d2cos1, (K, 1))

        # g_k affine parts (all vanish on the lids)
        self.gammaT = amp(params.amp_gamma)
        self.thetaM = rng.standard_normal((K, 2, 2)) * amp(params.amp_theta)[
            :, None, None
        ]
        self.theta_xy = mods.copy()
        self.theta_z = np.tile(sin1, (K, 1))
        self.dtheta_z = np.tile(dsin1, (K, 1))
        self.d2theta_z = np.tile(d2sin1, (K, 1))
        self.zhat_xy = amp(params.amp_zhat)[:, None, None] * mods
        self.nhat_xy = amp(params.amp_nhat)[:, None, None] * mods
        self.chat_xy = amp(params.amp_chat)[:, None, None] * mods
        self.hat_z = np.tile(sin1, (K, 1))
        self.dhat_z = np.tile(dsin1, (K, 1))
        self.d2hat_z = np.tile(d2sin1, (K, 1))

        self.eta, self.eta_report = compute_eta(self)
        self.has_linear = any(
            np.any(a != 0.0)
            for a in (
                self.psi_xy,
                self.phi_z,
                self.psiT_xy,
                self.zeta_const,
                self.zeta_xy,
                self.nu_xy,
                self.gammaT,
                self.thetaM,
                self.zhat_xy,
                self.nhat_xy,
            )
        )
        self._affine_states = None

    def affine_states(self):
        """Projected state-independent noise fields, one per mode."""
        if self._affine_states is None:
            from .state import zero_state

            out = []
            z = zero_state(self.basis)
            f = self.state_fields(z)
            for k in range(self.K):
                s1 = self.sigma1_apply(z, k, f)
                s2 = self.sigma2_apply(z, k, f)
                vc0, vck = project_velocity(self.basis, s1)
                tc = project_temperature(self.basis, s2)
                out.append(State(self.basis, vc0, vck, tc))
            self._affine_states = out
        return self._affine_states

    # -- per-state cached fields ---------------------------------------

    def state_fields(self, st: State):
        g = self.basis.grid
        vbar = vertical_average(st)
        vtilde = baroclinic_remainder(st)
        t = temperature_to_grid(st)
        return {
            "vbar": vbar,
            "vtilde": vtilde,
            "T": t,
            "dx_vb": np.stack([g.dx(vbar[0]), g.dx(vbar[1])]),
            "dy_vb": np.stack([g.dy(vbar[0]), g.dy(vbar[1])]),
            "dx_vt": np.stack([g.dx(vtilde[0]), g.dx(vtilde[1])]),
            "dy_vt": np.stack([g.dy(vtilde[0]), g.dy(vtilde[1])]),
            "dx_T": g.dx(t),
            "dy_T": g.dy(t),
        }

    # -- sigma applications --------------------------------------------

    def sigma1_apply(self, st: State, k: int, fields=None):
        """sigma1(v) e_k on the grid, before any projection."""
        if not 0 <= k < self.K:
            raise ConfigurationError(f"noise mode {k} outside 0..{self.K - 1}")
        f = fields or self.state_fields(st)
        out = np.zeros((2, *f["vtilde"].shape[1:]))
        for c in range(2):
            out[c] = (
                self.psi_xy[k, 0, :, :, None] * f["dx_vt"][c]
                + self.psi_xy[k, 1, :, :, None] * f["dy_vt"][c]
            )
            out[c] += (
                self.phi_z[k, 0, None, None, :] * f["dx_vb"][c][:, :, None]
                + self.phi_z[k, 1, None, None, :] * f["dy_vb"][c][:, :, None]
            )
            zk = (
                self.zeta_const[k]
                + self.zeta_xy[k][:, :, None] * self.zeta_z[k][None, None, :]
            )
            out[c] += zk * f["vbar"][c][:, :, None]
            out[c] += self.nu_xy[k][:, :, None] * f["vtilde"][c]
            out[c] += (
                self.chi_xy[k, c][:, :, None] * self.chi_z[k][None, None, :]
            )
        return out

    def sigma1_projected(self, st: State, k: int, fields=None):
        vc0, vck = project_velocity(self.basis, self.sigma1_apply(st, k, fields))
        b = self.basis
        return State(b, vc0, vck, np.zeros((b.n, b.n_z)), st.time)

    def sigma2_apply(self, st: State, k: int, fields=None):
        """sigma2(U) e_k on the grid."""
        if not 0 <= k < self.K:
            raise ConfigurationError(f"noise mode {k} outside 0..{self.K - 1}")
        f = fields or self.state_fields(st)
        out = (
            self.psiT_xy[k, 0, :, :, None] * f["dx_T"]
            + self.psiT_xy[k, 1, :, :, None] * f["dy_T"]
        )
        out += self.gammaT[k] * f["T"]
        grads = [f["dx_vb"], f["dy_vb"]]
        theta_prof = self.theta_xy[k][:, :, None] * self.theta_z[k][None, None, :]
        for i in range(2):
            for j in range(2):
                out += (
                    self.thetaM[k, i, j]
                    * theta_prof
                    * grads[i][j][:, :, None]
                )
        hz = self.hat_z[k][None, None, :]
        out += self.zhat_xy[k][:, :, None] * hz * f["vbar"][0][:, :, None]
        out += self.nhat_xy[k][:, :, None] * hz * f["vtilde"][0]
        out += self.chat_xy[k][:, :, None] * hz
        return out

    def sigma1_A_part(self, st: State, k: int, fields=None):
        """Vertical average of sigma1 e_k via the algebraic identity."""
        f = fields or self.state_fields(st)
        g = self.basis.grid
        aphi = g.integrate_z(self.phi_z[k]) / g.domain.h
        out = np.zeros_like(f["vbar"])
        for c in range(2):
            out[c] = aphi[0] * f["dx_vb"][c] + aphi[1] * f["dy_vb"][c]
            out[c] += self.zeta_const[k] * f["vbar"][c]
        return out

    def dz_sigma1_apply(self, st: State, k: int):
        """Analytic vertical derivative of sigma1(v) e_k.

        Uses the structural identity: transport hits dz vtilde, the Phi
        profile differentiates, and the affine parts differentiate their
        stored z-profiles (nu is z-independent so it hits dz vtilde).
        """
        g = self.basis.grid
        dzv, _ = dz_state_fields(st, order=1)
        f = self.state_fields(st)
        out = np.zeros_like(dzv)
        dx_dzv = np.stack([g.dx(dzv[0]), g.dx(dzv[1])])
        dy_dzv = np.stack([g.dy(dzv[0]), g.dy(dzv[1])])
        for c in range(2):
            out[c] = (
                self.psi_xy[k, 0, :, :, None] * dx_dzv[c]
                + self.psi_xy[k, 1, :, :, None] * dy_dzv[c]
            )
            out[c] += (
                self.dphi_z[k, 0, None, None, :] * f["dx_vb"][c][:, :, None]
                + self.dphi_z[k, 1, None, None, :] * f["dy_vb"][c][:, :, None]
            )
            out[c] += (
                self.zeta_xy[k][:, :, None]
                * self.dzeta_z[k][None, None, :]
                * f["vbar"][c][:, :, None]
            )
            out[c] += self.nu_xy[k][:, :, None] * dzv[c]
            out[c] += (
                self.chi_xy[k, c][:, :, None] * self.dchi_z[k][None, None, :]
            )
        return out

    # -- combined application for the time stepper ----------------------

    def weighted_sum_fields(self, st: State, weights, fields=None):
        """(sum_k w_k sigma1 e_k, sum_k w_k sigma2 e_k) in one evaluation.

        Linearity in the coefficient fields lets the K-sum collapse onto
        effective coefficients before any field product is formed.
        """
        f = fields or self.state_fields(st)
        w = np.asarray(weights)
        psi_e = np.tensordot(w, self.psi_xy, axes=(0, 0))
        phi_e = np.tensordot(w, self.phi_z, axes=(0, 0))
        psiT_e = np.tensordot(w, self.psiT_xy, axes=(0, 0))
        zeta_e = (w * self.zeta_const).sum() + np.einsum(
            "k,kxy,kz->xyz", w, self.zeta_xy, self.zeta_z
        )
        nu_e = np.tensordot(w, self.nu_xy, axes=(0, 0))
        chi_e = np.einsum("k,kcxy,kz->cxyz", w, self.chi_xy, self.chi_z)
        sv = np.zeros((2, *f["vtilde"].shape[1:]))
        for c in range(2):
            sv[c] = (
                psi_e[0][:, :, None] * f["dx_vt"][c]
                + psi_e[1][:, :, None] * f["dy_vt"][c]
                + phi_e[0][None, None, :] * f["dx_vb"][c][:, :, None]
                + phi_e[1][None, None, :] * f["dy_vb"][c][:, :, None]
                + zeta_e * f["vbar"][c][:, :, None]
                + nu_e[:, :, None] * f["vtilde"][c]
                + chi_e[c]
            )
        stt = (
            psiT_e[0][:, :, None] * f["dx_T"]
            + psiT_e[1][:, :, None] * f["dy_T"]
            + np.tensordot(w, self.gammaT, axes=(0, 0)) * f["T"]
        )
        grads = [f["dx_vb"], f["dy_vb"]]
        theta_e = np.einsum(
            "k,kij,kxy,kz->ijxyz", w, self.thetaM, self.theta_xy, self.theta_z
        )
        for i in range(2):
            for j in range(2):
                stt += theta_e[i, j] * grads[i][j][:, :, None]
        zhat_e = np.einsum("k,kxy,kz->xyz", w, self.zhat_xy, self.hat_z)
        nhat_e = np.einsum("k,kxy,kz->xyz", w, self.nhat_xy, self.hat_z)
        chat_e = np.einsum("k,kxy,kz->xyz", w, self.chat_xy, self.hat_z)
        stt += zhat_e * f["vbar"][0][:, :, None]
        stt += nhat_e * f["vtilde"][0]
        stt += chat_e
        return sv, stt

    def weighted_sum_state(self, st: State, weights) -> State:
        """Projected sum_k w_k sigma(U) e_k.

        Purely affine models bypass the grid entirely: the projected
        affine fields are cached and only a coefficient combination
        remains per call.
        """
        if not self.has_linear:
            from .state import zero_state

            out = zero_state(self.basis, st.time)
            for k, a in enumerate(self.affine_states()):
                w = weights[k]
                out.vc0 += w * a.vc0
                out.vck += w * a.vck
                out.tc += w * a.tc
            return out
        sv, stt = self.weighted_sum_fields(st, weights)
        vc0, vck = project_velocity(self.basis, sv)
        tc = project_temperature(self.basis, stt)
        return State(self.basis, vc0, vck, tc, st.time)


# ----------------------------------------------------------------------
# structural quantities


def compute_eta(model: NoiseModel):
    """Transport intensity: the smallest eta whose square dominates each
    of the three sup-norm sums.

    The baroclinic transport sum is reported under both readings (the
    mean-free part of Psi vanishes identically for z-independent Psi;
    the full sup-sum is the quantity the L4 estimates consume).
    """
    g = model.basis.grid
    s_psiT = float(
        sum(
            np.sqrt((model.psiT_xy[k] ** 2).sum(axis=0)).max() ** 2
            for k in range(model.K)
        )
    )
    aphi = model.phi_z @ g.wz / g.domain.h  # (K, 2)
    s_aphi = float((np.linalg.norm(aphi, axis=1) ** 2).sum())
    s_psi = float(
        sum(
            np.sqrt((model.psi_xy[k] ** 2).sum(axis=0)).max() ** 2
            for k in range(model.K)
        )
    )
    rpsi = 0.0  # Psi_k are z-independent, so their mean-free part vanishes
    eta = float(np.sqrt(max(s_psiT, s_aphi, s_psi)))
    report = {
        "sum_psiT_sup2": s_psiT,
        "sum_APhi_sup2": s_aphi,
        "sum_psi_sup2": s_psi,
        "sum_RPsi_sup2": rpsi,
        "eta": eta,
    }
    return eta, report


def _hs_norm_sq(model, st, fields, grid, which="l2"):
    """Sum over modes of squared L2(M) norms of the sigma stack."""
    w3 = grid.wxy[:, :, None] * grid.wz[None, None, :]
    total = 0.0
    for k in range(model.K):
        s1 = model.sigma1_apply(st, k, fields)
        s2 = model.sigma2_apply(st, k, fields)
        if which == "l2":
            total += float((w3 * (s1[0] ** 2 + s1[1] ** 2 + s2**2)).sum())
        elif which == "grad":
            for comp in (s1[0], s1[1], s2):
                total += float(
                    (w3 * (grid.dx(comp) ** 2 + grid.dy(comp) ** 2)).sum()
                )
        else:
            raise ConfigurationError(which)
    return total


def compute_gamma(model: NoiseModel, sample_states):
    """Empirical Lipschitz constants in the four difference norms.

    sigma is affine, so differences depend only on the state difference;
    the ratio is maximised over the sampled pairs.
    """
    grid = model.basis.grid
    out = {"lip_l2": 0.0, "lip_h1l2": 0.0, "lip_l2h1": 0.0, "lip_h2l2": 0.0}
    pairs = list(zip(sample_states[::2], sample_states[1::2]))
    for ua, ub in pairs:
        d = ua - ub
        fields = model.state_fields(d)
        num_l2 = np.sqrt(_hs_norm_sq(model, d, fields, grid, "l2"))
        num_grad = np.sqrt(_hs_norm_sq(model, d, fields, grid, "grad"))
        w3 = grid.wxy[:, :, None] * grid.wz[None, None, :]
        num_dz = 0.0
        num_dzz = 0.0
        for k in range(model.K):
            dzs1 = model.dz_sigma1_apply(d, k)
            num_dz += float((w3 * (dzs1[0] ** 2 + dzs1[1] ** 2)).sum())
            dzz1 = _dzz_sigma1(model, d, k)
            num_dzz += float((w3 * (dzz1[0] ** 2 + dzz1[1] ** 2)).sum())
        num_dz, num_dzz = np.sqrt(num_dz), np.sqrt(num_dzz)
        den_l2 = np.sqrt(mixed_spectral_norm_sq(d, 0, 1))
        den_h1h1 = np.sqrt(mixed_spectral_norm_sq(d, 1, 1))
        den_l2h2 = np.sqrt(mixed_spectral_norm_sq(d, 0, 2))
        den_h2h1 = np.sqrt(mixed_spectral_norm_sq(d, 2, 1))
        if den_l2 > 0:
            out["lip_l2"] = max(out["lip_l2"], num_l2 / den_l2)
            out["lip_h1l2"] = max(out["lip_h1l2"], num_dz / den_h1h1)
            out["lip_l2h1"] = max(out["lip_l2h1"], num_grad / den_l2h2)
            out["lip_h2l2"] = max(out["lip_h2l2"], num_dzz / den_h2h1)
    return out


def leray_compat_defect(model: NoiseModel, st: State):
    """Bound on max_k ||(1 - P_G) A sigma1(v) e_k||_{L2(G)}.

    The vertical average of sigma1 carries its (nonzero) lateral trace;
    the Leray complement of such a field is controlled by its full-grid
    divergence through ||(1-P)f|| <= ||div f|| / sigma_min(D).  With the
    commuting tensor derivatives and the structural noise hypotheses the
    divergence vanishes at round-off whenever div_H vbar does.
    """
    from .state import field_vertical_average

    g = model.basis.grid
    fields = model.state_fields(st)
    worst = 0.0
    for k in range(model.K):
        abar = field_vertical_average(g, model.sigma1_apply(st, k, fields))
        div = g.div_xy(abar)
        worst = max(worst, np.sqrt(float(np.sum(g.wxy * div * div))))
    return worst / np.sqrt(g.leray_smallest_singular_sq())


def _dzz_sigma1(model, st, k):
    """Second vertical derivative of sigma1 e_k (analytic profiles)."""
    g = model.basis.grid
    dzzv, _ = dz_state_fields(st, order=2)
    dzv, _ = dz_state_fields(st, order=1)
    f = model.state_fields(st)
    out = np.zeros_like(dzzv)
    dx_dzzv = np.stack([g.dx(dzzv[0]), g.dx(dzzv[1])])
    dy_dzzv = np.stack([g.dy(dzzv[0]), g.dy(dzzv[1])])
    for c in range(2):
        out[c] = (
            model.psi_xy[k, 0, :, :, None] * dx_dzzv[c]
            + model.psi_xy[k, 1, :, :, None] * dy_dzzv[c]
        )
        out[c] += (
            model.d2phi_z[k, 0, None, None, :] * f["dx_vb"][c][:, :, None]
            + model.d2phi_z[k, 1, None, None, :] * f["dy_vb"][c][:, :, None]
        )
        out[c] += (
            model.zeta_xy[k][:, :, None]
            * model.d2zeta_z[k][None, None, :]
            * f["vbar"][c][:, :, None]
        )
        out[c] += model.nu_xy[k][:, :, None] * dzzv[c]
        out[c] += (
            model.chi_xy[k, c][:, :, None] * model.d2chi_z[k][None, None, :]
        )
    return out
