"""Inequality verification suites with calibrated-constant regression.

Each suite draws a seeded family of band-limited random states, computes
both sides of its inequalities, and compares the family maximum of
LHS/RHS against a stored calibration constant with 10% headroom.  The
constants live in ``hsgs/data/calibration.json`` (regenerate with
``hsgs check --calibrate``); a code change that moves any constant past
its headroom fails the suite.

Structural identities (Hoelder, Poincare, cancellation) need no
calibration and are asserted with fixed tolerances.
"""

import json
import os

import numpy as np

from . import norms
from .basis import assemble_basis
from .domain import CylinderDomain, build_grid
from .errors import ConfigurationError
from .noise import NoiseModel, NoiseParams
from .operators import OperatorContext, nonlinear_B
from .state import (
    State,
    mixed_spectral_norm_sq,
    random_state,
    spectral_norms,
    truncate_Pn,
)

HEADROOM = 1.1
DOUBLING_FACTOR = 2.0

REFERENCE = {
    "domain": dict(Lx=1.0, Ly=1.0, h=1.0, Nx=20, Ny=20, Nz=8),
    "n": 12,
    "n_z": 4,
    "seed": 2026,
}


def reference_basis(doubling=False, cache=None):
    d = dict(REFERENCE["domain"])
    if doubling:
        d["Nx"] *= 2
        d["Ny"] *= 2
        d["Nz"] *= 2
    domain = CylinderDomain(**d)
    if cache is not None:
        from .basis import get_basis

        return get_basis(domain, REFERENCE["n"], REFERENCE["n_z"], cache)
    return assemble_basis(build_grid(domain), REFERENCE["n"], REFERENCE["n_z"])


# ----------------------------------------------------------------------
# calibration fixture


def _fixture_path():
    return os.path.join(os.path.dirname(__file__), "data", "calibration.json")


def load_calibration():
    path = _fixture_path()
    if not os.path.exists(path):
        return {}
    with open(path) as f:
        return json.load(f)


def save_calibration(constants):
    path = _fixture_path()
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as f:
        json.dump(constants, f, indent=2, sort_keys=True)
        f.write("\n")


def _regress(report, name, value, stored):
    """One calibrated-constant regression entry."""
    ok = stored is not None and value <= stored * HEADROOM
    report["items"].append(
        {
            "name": name,
            "constant": value,
            "stored": stored,
            "pass": bool(ok),
        }
    )
    if not ok:
        report["pass"] = False


def _new_report(suite, seed, n_samples):
    return {
        "suite": suite,
        "seed": seed,
        "n_samples": n_samples,
        "items": [],
        "pass": True,
    }


# ----------------------------------------------------------------------
# Poincare suite


def _frac_norm_sq(st: State, alpha):
    b = st.basis
    out = float(np.sum(b.stokes_vals ** (2 * alpha) * st.vc0**2))
    out += float(
        np.sum(b.dirvec_vals[:, None] ** (2 * alpha) * st.vck**2)
    )
    out += float(
        np.sum(b.neumann_vals[:, None] ** (2 * alpha) * st.tc**2)
    )
    return out


def poincare_suite(basis, n_samples=500, truncations=(10, 50), seed=None):
    """Truncation/complement inequalities with diagonal fractional norms.

    The retained part uses the max of the three family eigenvalues at
    the truncation level; the complement the min (each family's tail is
    bounded below by its own level-n eigenvalue, and only the min is
    uniform across families).  Violations of the literal cross-family
    max on the complement are counted separately for transparency.
    """
    seed = REFERENCE["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    pairs = [(0.0, 0.5), (0.0, 1.0), (0.5, 1.0)]
    report = _new_report("poincare", seed, n_samples)
    violations = 0
    literal_max_violations = 0
    checked = 0
    slack = 1e-12
    # deterministic worst cases: pure first-complement modes per family
    probes = []
    for n_tr in truncations:
        if n_tr < basis.n:
            for attr in ("vc0", "vck", "tc"):
                st = State(
                    basis,
                    np.zeros(basis.n),
                    np.zeros((basis.n, basis.n_z)),
                    np.zeros((basis.n, basis.n_z)),
                )
                if attr == "vc0":
                    st.vc0[n_tr] = 1.0
                else:
                    getattr(st, attr)[n_tr, 0] = 1.0
                probes.append(st)
    samples = probes + [
        random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        for _ in range(n_samples)
    ]
    for st in samples:
        for n_tr in truncations:
            if n_tr > basis.n:
                raise ConfigurationError(
                    f"truncation {n_tr} exceeds basis n={basis.n}"
                )
            lam_bar = basis.lambda_bar(n_tr)
            lam_floor = basis.lambda_floor(n_tr)
            p = truncate_Pn(st, n_tr)
            q = st - p
            for a1, a2 in pairs:
                checked += 1
                lhs_p = np.sqrt(_frac_norm_sq(p, a2))
                rhs_p = lam_bar ** (a2 - a1) * np.sqrt(_frac_norm_sq(p, a1))
                if lhs_p > rhs_p * (1 + slack):
                    violations += 1
                lhs_q = np.sqrt(_frac_norm_sq(q, a1))
                rhs_q = lam_floor ** (a1 - a2) * np.sqrt(_frac_norm_sq(q, a2))
                if lhs_q > rhs_q * (1 + slack):
                    violations += 1
                rhs_q_lit = lam_bar ** (a1 - a2) * np.sqrt(
                    _frac_norm_sq(q, a2)
                )
                if lhs_q > rhs_q_lit * (1 + slack):
                    literal_max_violations += 1
    report["items"].append(
        {
            "name": "poincare_violations",
            "constant": violations,
            "stored": 0,
            "pass": violations == 0,
            "checked": checked,
            "literal_max_complement_violations": literal_max_violations,
        }
    )
    report["pass"] = violations == 0
    return report


# ----------------------------------------------------------------------
# Hoelder suite


_HOELDER_TUPLES = [
    # (p1, q1, p2, q2, p, q)
    (2, 2, 2, 2, 1, 1),
    (4, 4, 4, 4, 2, 2),
    (np.inf, 4, 2, 4, 2, 2),
    (np.inf, np.inf, 2, 2, 2, 2),
    (4, 2, 4, np.inf, 2, 2),
    (np.inf, 2, np.inf, 2, np.inf, 1),
]


def holder_suite(basis, n_samples=200, seed=None):
    """Discrete anisotropic Hoelder inequality (holds exactly for any
    quadrature weights; slack covers round-off only)."""
    seed = REFERENCE["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    g = basis.grid
    report = _new_report("holder", seed, n_samples)
    worst = 0.0
    for _ in range(n_samples):
        sa = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        sb = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        from .state import temperature_to_grid

        f = temperature_to_grid(sa)
        h = temperature_to_grid(sb)
        fg = f * h
        for p1, q1, p2, q2, p, q in _HOELDER_TUPLES:
            lhs = norms.aniso_norm(g, fg, norms.NormSpec(p, q))
            rhs = norms.aniso_norm(g, f, norms.NormSpec(p1, q1)) * (
                norms.aniso_norm(g, h, norms.NormSpec(p2, q2))
            )
            worst = max(worst, lhs - rhs)
    report["items"].append(
        {
            "name": "holder_max_excess",
            "constant": worst,
            "stored": 1e-8,
            "pass": worst <= 1e-8,
        }
    )
    report["pass"] = worst <= 1e-8
    return report


# ----------------------------------------------------------------------
# interpolation suites


def interpolation_constants(basis, n_samples=300, seed=None):
    seed = REFERENCE["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    c_gg = {2: 0.0, 4: 0.0}
    c_clt = 0.0
    for _ in range(n_samples):
        st = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        for p in (2, 4):
            lhs = norms.state_aniso_norm(st, norms.NormSpec(np.inf, p))
            a = norms.state_aniso_norm(st, norms.NormSpec(2, p))
            bz = norms.state_aniso_norm(st, norms.NormSpec(2, p, dz_order=1))
            h1zlp = np.hypot(a, bz)
            if a > 0 and h1zlp > 0:
                c_gg[p] = max(c_gg[p], lhs / np.sqrt(a * h1zlp))
        lhs = norms.norm_linfz_l4(st)
        h1z = np.sqrt(mixed_spectral_norm_sq(st, 1, 0))
        l2h1 = np.sqrt(mixed_spectral_norm_sq(st, 0, 1))
        if h1z > 0 and l2h1 > 0:
            c_clt = max(c_clt, lhs / np.sqrt(h1z * l2h1))
    return {"interp_gg_p2": c_gg[2], "interp_gg_p4": c_gg[4],
            "interp_clt": c_clt}


def interpolation_suite(basis, n_samples=300, seed=None, stored=None):
    stored = stored if stored is not None else load_calibration()
    report = _new_report("interpolation", seed or REFERENCE["seed"], n_samples)
    consts = interpolation_constants(basis, n_samples, seed)
    for name, value in consts.items():
        _regress(report, name, value, stored.get(name))
    return report


# ----------------------------------------------------------------------
# logarithmic Sobolev suite

LOG_SOBOLEV_R1 = 132
LOG_SOBOLEV_LAMBDA = 0.5


def log_sobolev_ratio(st: State):
    """||F||_inf over (1 + ||F||_132) log^1/2(e + grad/L6/dz/L2 terms)
    for the lateral-Dirichlet velocity part of the state."""
    lhs = norms.norm_linf(st, part="v")
    l132 = norms.norm_lq(st, LOG_SOBOLEV_R1, part="v")
    grad6 = norms.state_aniso_norm(
        st, norms.NormSpec(6, 6, dxy_order=1), part="v"
    )
    l6 = norms.norm_lq(st, 6, part="v")
    dz2 = np.sqrt(
        mixed_spectral_norm_sq(st, 1, 0) - mixed_spectral_norm_sq(st, 0, 0)
    )
    l2 = np.sqrt(mixed_spectral_norm_sq(st, 0, 0))
    logterm = np.log(np.e + grad6 + l6 + dz2 + l2) ** LOG_SOBOLEV_LAMBDA
    rhs = (1.0 + l132) * logterm
    return lhs / rhs if rhs > 0 else 0.0


def _log_sobolev_family_max(basis, n_samples, seed):
    """Family max over shapes x log-spaced amplitudes 1e-2..1e3.

    The ratio is not scale-invariant (it peaks where the L^132 term
    saturates the 1 in the prefactor), so the amplitude sweep is part of
    the family, not a separate test."""
    rng = np.random.default_rng(seed)
    c = 0.0
    amps = np.logspace(-2, 3, 6)
    for _ in range(n_samples):
        st = random_state(basis, rng, h1_norm=1.0)
        for a in amps:
            c = max(c, log_sobolev_ratio(a * st))
    return c


def log_sobolev_suite(basis, n_samples=200, seed=None, stored=None):
    seed = REFERENCE["seed"] if seed is None else seed
    stored = stored if stored is not None else load_calibration()
    report = _new_report("log_sobolev", seed, n_samples)
    c = _log_sobolev_family_max(basis, n_samples, seed)
    _regress(report, "log_sobolev_c", c, stored.get("log_sobolev_c"))
    return report


# ----------------------------------------------------------------------
# nonlinearity suite


def _dz_pairing(a: State, b: State, power):
    """<dz^m A, dz^m B> via the exact mode factors (m = power)."""
    bb = a.basis
    kz2 = (bb.vert_sin.k * np.pi / bb.grid.domain.h) ** 2
    f = kz2**power
    return float(
        np.sum(f[None, :] * a.vck * b.vck)
        + np.sum(f[None, :] * a.tc * b.tc)
    )


def _lap_pairing(a: State, b: State):
    """<A, Lap_H B> = -sum lambda a b (diagonal)."""
    bb = a.basis
    return -float(
        np.sum(bb.stokes_vals * a.vc0 * b.vc0)
        + np.sum(bb.dirvec_vals[:, None] * a.vck * b.vck)
        + np.sum(bb.neumann_vals[:, None] * a.tc * b.tc)
    )


def nonlinearity_constants(basis, n_samples=500, seed=None):
    """Family maxima of LHS/RHS for the six transport-term estimates."""
    seed = REFERENCE["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    ctx = OperatorContext(basis=basis)
    names = [f"nonlin_{i}" for i in range(1, 7)]
    consts = dict.fromkeys(names, 0.0)
    from .state import inner

    for _ in range(n_samples):
        u = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        ub = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        us = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        b_ub = nonlinear_B(ctx, u, ub)
        b_uu = nonlinear_B(ctx, u, u)
        sn_u = spectral_norms(u)
        sn_ub = spectral_norms(ub)
        # 1: |<B(U,Ub),Us>| <= C ||U||_H1 ||Ub||_H1zH1 ||Us||_L2zH1
        lhs = abs(inner(b_ub, us))
        rhs = (
            sn_u["h1"]
            * np.sqrt(mixed_spectral_norm_sq(ub, 1, 1))
            * np.sqrt(mixed_spectral_norm_sq(us, 0, 1))
        )
        if rhs > 0:
            consts["nonlin_1"] = max(consts["nonlin_1"], lhs / rhs)
        # 2: mixed Linf_z L4 form
        linf_u = norms.norm_linfz_l4(u)
        linf_ub = norms.norm_linfz_l4(ub)
        rhs = (
            linf_u * sn_ub["grad_h"] + sn_u["grad_h"] * linf_ub
        ) * norms.norm_h1z_l4(us)
        if rhs > 0:
            consts["nonlin_2"] = max(consts["nonlin_2"], lhs / rhs)
        # 3: |<dz B(U,U), dz U>|
        lhs = abs(_dz_pairing(b_uu, u, 1))
        gdz = np.sqrt(
            mixed_spectral_norm_sq(u, 1, 1)
            - mixed_spectral_norm_sq(u, 1, 0)
            - mixed_spectral_norm_sq(u, 0, 1)
            + mixed_spectral_norm_sq(u, 0, 0)
        )  # || grad dz U ||
        dz = sn_u["dz"]
        rhs = linf_u * (gdz * dz + gdz**1.5 * np.sqrt(dz))
        if rhs > 0:
            consts["nonlin_3"] = max(consts["nonlin_3"], lhs / rhs)
        # 4: ||B(U,Ub)||^2
        lhs = inner(b_ub, b_ub)
        lap_ub = sn_ub["ah"]
        gdz_ub = np.sqrt(
            mixed_spectral_norm_sq(ub, 1, 1)
            - mixed_spectral_norm_sq(ub, 1, 0)
            - mixed_spectral_norm_sq(ub, 0, 1)
            + mixed_spectral_norm_sq(ub, 0, 0)
        )
        rhs = linf_u**2 * sn_ub["grad_h"] * (
            sn_ub["grad_h"] + lap_ub
        ) + sn_u["grad_h"] * sn_u["ah"] * sn_ub["dz"] * (
            sn_ub["dz"] + gdz_ub
        )
        if rhs > 0:
            consts["nonlin_4"] = max(consts["nonlin_4"], lhs / rhs)
        # 5: |<B(U,U), Lap U>|
        lhs = abs(_lap_pairing(b_uu, u))
        l2h1 = np.sqrt(mixed_spectral_norm_sq(u, 0, 1))
        l2h2 = np.sqrt(mixed_spectral_norm_sq(u, 0, 2))
        h1h1 = np.sqrt(mixed_spectral_norm_sq(u, 1, 1))
        rhs = linf_u * np.sqrt(l2h1) * l2h2**1.5 + linf_u * np.sqrt(
            l2h1
        ) * np.sqrt(l2h2) * h1h1
        if rhs > 0:
            consts["nonlin_5"] = max(consts["nonlin_5"], lhs / rhs)
        # 6: |<dzz B(U,U), dzz U>|
        lhs = abs(_dz_pairing(b_uu, u, 2))
        h1zl4 = norms.norm_h1z_l4(u)
        h2h1 = np.sqrt(mixed_spectral_norm_sq(u, 2, 1))
        rhs = h1zl4 * np.sqrt(sn_u["dzz"]) * h2h1**1.5
        if rhs > 0:
            consts["nonlin_6"] = max(consts["nonlin_6"], lhs / rhs)
    return consts


def nonlinearity_suite(basis, n_samples=500, seed=None, stored=None):
    stored = stored if stored is not None else load_calibration()
    report = _new_report("nonlinearity", seed or REFERENCE["seed"], n_samples)
    consts = nonlinearity_constants(basis, n_samples, seed)
    for name, value in consts.items():
        _regress(report, name, value, stored.get(name))
    return report


# ----------------------------------------------------------------------
# vertical Poincare (baroclinic part)


def vertical_poincare_constants(basis, n_samples=200, seed=None):
    seed = REFERENCE["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    out = {f"vert_poincare_q{q}": 0.0 for q in (2, 4, 6)}
    for _ in range(n_samples):
        st = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        vt = st.copy()
        vt.vc0[:] = 0.0
        vt.tc[:] = 0.0
        for q in (2, 4, 6):
            lhs = norms.norm_lq(vt, q, part="v")
            rhs = norms.state_aniso_norm(
                vt, norms.NormSpec(q, q, dz_order=1), part="v"
            )
            if rhs > 0:
                key = f"vert_poincare_q{q}"
                out[key] = max(out[key], lhs / rhs)
    return out


def vertical_poincare_suite(basis, n_samples=200, seed=None, stored=None):
    stored = stored if stored is not None else load_calibration()
    report = _new_report(
        "vertical_poincare", seed or REFERENCE["seed"], n_samples
    )
    consts = vertical_poincare_constants(basis, n_samples, seed)
    for name, value in consts.items():
        _regress(report, name, value, stored.get(name))
    return report


# ----------------------------------------------------------------------
# cancellation suite


def cancellation_suite(basis, n_pairs=1000, seed=None, tol=1e-10):
    seed = REFERENCE["seed"] if seed is None else seed
    rng = np.random.default_rng(seed)
    ctx = OperatorContext(basis=basis)
    from .state import inner

    worst = 0.0
    for _ in range(n_pairs):
        u = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        us = random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        val = abs(inner(nonlinear_B(ctx, u, us), us))
        scale = spectral_norms(u)["h1"] * spectral_norms(us)["h1"] ** 2
        worst = max(worst, val / scale)
    report = _new_report("cancellation", seed, n_pairs)
    report["items"].append(
        {
            "name": "cancellation_rel",
            "constant": worst,
            "stored": tol,
            "pass": worst <= tol,
        }
    )
    report["pass"] = worst <= tol
    return report


# ----------------------------------------------------------------------
# noise growth suite


def _grad_hs_sq(model, st, fields):
    g = model.basis.grid
    w3 = g.wxy[:, :, None] * g.wz[None, None, :]
    total = 0.0
    for k in range(model.K):
        s1 = model.sigma1_apply(st, k, fields)
        s2 = model.sigma2_apply(st, k, fields)
        for comp in (s1[0], s1[1], s2):
            total += float((w3 * (g.dx(comp) ** 2 + g.dy(comp) ** 2)).sum())
    return total


def _hs_sq(model, st, fields):
    g = model.basis.grid
    w3 = g.wxy[:, :, None] * g.wz[None, None, :]
    total = 0.0
    for k in range(model.K):
        s1 = model.sigma1_apply(st, k, fields)
        s2 = model.sigma2_apply(st, k, fields)
        total += float((w3 * (s1[0] ** 2 + s1[1] ** 2 + s2**2)).sum())
    return total


def _dz_hs_sq(model, st):
    g = model.basis.grid
    w3 = g.wxy[:, :, None] * g.wz[None, None, :]
    from .noise import _dzz_sigma1

    tot1, tot2 = 0.0, 0.0
    for k in range(model.K):
        d1 = model.dz_sigma1_apply(st, k)
        tot1 += float((w3 * (d1[0] ** 2 + d1[1] ** 2)).sum())
        d2 = _dzz_sigma1(model, st, k)
        tot2 += float((w3 * (d2[0] ** 2 + d2[1] ** 2)).sum())
    return tot1, tot2


def _quadratic_part(fn, st):
    """Exact state-quadratic part of an affine-squared functional via
    f(U) + f(-U) - 2 f(0) (all cross terms cancel)."""
    zero = 0.0 * st
    return 0.5 * (fn(st) + fn(-1.0 * st)) - fn(zero)


def _eigenvalue_clusters(vals, rtol=1e-8):
    clusters, cur = [], [0]
    for m in range(1, len(vals)):
        if abs(vals[m] - vals[cur[0]]) <= rtol * max(1.0, vals[cur[0]]):
            cur.append(m)
        else:
            clusters.append(cur)
            cur = [m]
    clusters.append(cur)
    return clusters


def _best_x_combo(gx_energy, gy_energy):
    """Coefficients maximising x-fraction over a degenerate cluster.

    gx_energy/gy_energy: Gram matrices of dx/dy energies in the cluster
    basis.  Degenerate eigenspaces come out of LAPACK in an arbitrary
    rotation, so single returned modes can have scrambled orientation;
    the generalized eigenproblem recovers the extremal combination.
    """
    import scipy.linalg as sla

    total = gx_energy + gy_energy
    w, v = sla.eigh(gx_energy, total)
    return v[:, -1], float(w[-1])


def gradient_dominated_states(basis, count=6):
    """States whose gradient energy is maximally x-directed.

    Within each (near-)degenerate horizontal eigenvalue cluster the
    orientation is optimised explicitly; the best combinations across
    the top clusters of the baroclinic and temperature families are
    returned as single-(m,k=1) states."""
    g = basis.grid
    out = []

    def family_states(vec_list):
        mats = []
        w = g.wxy[None, :, :]
        for vecs in vec_list:
            gx = np.zeros((len(vecs), len(vecs)))
            gy = np.zeros_like(gx)
            dxs = [
                np.stack([g.dx(c) for c in comps]) for comps in vecs
            ]
            dys = [
                np.stack([g.dy(c) for c in comps]) for comps in vecs
            ]
            for a in range(len(vecs)):
                for bq in range(a, len(vecs)):
                    gx[a, bq] = gx[bq, a] = float(
                        np.sum(w * dxs[a] * dxs[bq])
                    )
                    gy[a, bq] = gy[bq, a] = float(
                        np.sum(w * dys[a] * dys[bq])
                    )
            combo, frac = _best_x_combo(gx, gy)
            mats.append((frac, combo))
        mats_sorted = sorted(range(len(mats)), key=lambda i: mats[i][0])
        return [(i, *mats[i]) for i in mats_sorted[-count:]]

    # baroclinic family
    clusters = _eigenvalue_clusters(basis.dirvec_vals)
    vec_list, members = [], []
    for cl in clusters:
        comps = []
        for m in cl:
            v = g.unpack_velocity(basis.dirvec_vecs[:, m])
            comps.append([v[0], v[1]])
        vec_list.append(comps)
        members.append(cl)
    for ci, frac, combo in family_states(vec_list):
        st = State(
            basis,
            np.zeros(basis.n),
            np.zeros((basis.n, basis.n_z)),
            np.zeros((basis.n, basis.n_z)),
        )
        for c, m in zip(combo, members[ci]):
            st.vck[m, 0] = c
        out.append(st)
    # temperature family
    clusters = _eigenvalue_clusters(basis.neumann_vals)
    vec_list, members = [], []
    for cl in clusters:
        if basis.neumann_vals[cl[0]] < 1e-10:
            continue  # the constant mode has no gradient
        comps = [
            [basis.neumann_vecs[:, m].reshape(g.nxc, g.nyc)] for m in cl
        ]
        vec_list.append(comps)
        members.append(cl)
    for ci, frac, combo in family_states(vec_list):
        st = State(
            basis,
            np.zeros(basis.n),
            np.zeros((basis.n, basis.n_z)),
            np.zeros((basis.n, basis.n_z)),
        )
        for c, m in zip(combo, members[ci]):
            st.tc[m, 0] = c
        out.append(st)
    return out


def barotropic_gradient_states(basis, count=4):
    """Barotropic states maximising the x-share of the Hessian energy.

    Used by the barotropic-average growth fit: within degenerate Stokes
    clusters the combination maximising |dx grad vbar|^2 / |Lap vbar|^2
    is found by a small generalized eigenproblem."""
    import scipy.linalg as sla

    g = basis.grid
    out = []
    clusters = _eigenvalue_clusters(basis.stokes_vals)
    scored = []
    for cl in clusters:
        fields = []
        for m in cl:
            v = g.unpack_velocity(basis.stokes_vecs[:, m]) / np.sqrt(
                g.domain.h
            )
            fields.append(v)
        n = len(cl)
        A = np.zeros((n, n))
        B = np.zeros((n, n))
        w = g.wxy[None, :, :]
        hx = [
            np.stack(
                [g.dx(g.dx(v[0])), g.dx(g.dy(v[0])),
                 g.dx(g.dx(v[1])), g.dx(g.dy(v[1]))]
            )
            for v in fields
        ]
        laps = [
            np.stack([g.lap_dirichlet_xy(v[0]), g.lap_dirichlet_xy(v[1])])
            for v in fields
        ]
        for a in range(n):
            for b2 in range(a, n):
                A[a, b2] = A[b2, a] = float(np.sum(w * hx[a] * hx[b2]))
                B[a, b2] = B[b2, a] = float(np.sum(w * laps[a] * laps[b2]))
        w, v = sla.eigh(A, B)
        scored.append((float(w[-1]), cl, v[:, -1]))
    scored.sort()
    best = scored[-1][0] if scored else 0.0
    for frac, cl, combo in scored[-count:]:
        st = State(
            basis,
            np.zeros(basis.n),
            np.zeros((basis.n, basis.n_z)),
            np.zeros((basis.n, basis.n_z)),
        )
        for c, m in zip(combo, cl):
            st.vc0[m] = c
        out.append(st)
    return out, best


def grid_gradient_energy_sq(st: State):
    """Gradient energy with the same centered operators the noise uses.

    The recovery fit must compare like with like: sigma's transport term
    differentiates with Dx/Dy, so the declared-eta recovery divides by
    this quantity rather than the operator-energy sum(lambda c^2)."""
    from .state import temperature_to_grid, velocity_to_grid

    g = st.basis.grid
    v = velocity_to_grid(st)
    t = temperature_to_grid(st)
    w3 = g.wxy[:, :, None] * g.wz[None, None, :]
    total = 0.0
    for comp in (v[0], v[1], t):
        total += float((w3 * (g.dx(comp) ** 2 + g.dy(comp) ** 2)).sum())
    return total


def _bar_grad_hs_sq(model, s, fields):
    """Sum over modes of the L2(G) gradient energy of A sigma1 e_k."""
    from .state import field_vertical_average

    g = model.basis.grid
    total = 0.0
    for k in range(model.K):
        abar = field_vertical_average(
            g, model.sigma1_apply(s, k, fields)
        )
        for c in range(2):
            total += float(
                np.sum(g.wxy * (g.dx(abar[c]) ** 2 + g.dy(abar[c]) ** 2))
            )
    return total


def _bar_lap_energy_sq(s):
    from .state import vertical_average

    g = s.basis.grid
    vbar = vertical_average(s)
    return float(
        np.sum(
            g.wxy
            * (
                g.lap_dirichlet_xy(vbar[0]) ** 2
                + g.lap_dirichlet_xy(vbar[1]) ** 2
            )
        )
    )


def noise_growth_suite(model: NoiseModel, n_samples=40, seed=None,
                       eta_rtol=0.10):
    """Fitted (c, eta^2) for the four growth conditions plus the
    barotropic-average and boundary conditions.

    Every condition must have eta^2_fit <= declared (with headroom);
    the two-sided recovery (fit also reaches the declared intensity) is
    asserted for the L2 and barotropic conditions when the family is
    aligned and unmodulated, i.e. when its sup-sums are attainable."""
    seed = REFERENCE["seed"] if seed is None else seed
    basis = model.basis
    g = basis.grid
    rng = np.random.default_rng(seed)
    report = _new_report("noise_growth", seed, n_samples)
    aligned = model.params.aligned and model.params.ripple == 0.0
    generic = [
        random_state(basis, rng, h1_norm=rng.uniform(0.5, 2.0))
        for _ in range(n_samples)
    ]
    constructed = gradient_dominated_states(basis)
    constructed_bar, bar_align = barotropic_gradient_states(basis)
    # the averaged-noise fit can only reach its sup when the truncated
    # Stokes span contains sufficiently direction-aligned modes
    bar_recoverable = bar_align >= (1.0 - eta_rtol) ** 2

    conditions = {
        "growth_l2": {
            "y": lambda s: _hs_sq(model, s, model.state_fields(s)),
            "b": grid_gradient_energy_sq,
            "a": lambda s: 1.0 + mixed_spectral_norm_sq(s, 0, 0),
            "two_sided": True,
        },
        "growth_h1l2": {
            "y": lambda s: _dz_hs_sq(model, s)[0],
            "b": lambda s: mixed_spectral_norm_sq(s, 1, 1)
            - mixed_spectral_norm_sq(s, 1, 0)
            - mixed_spectral_norm_sq(s, 0, 1)
            + mixed_spectral_norm_sq(s, 0, 0),
            "a": lambda s: 1.0 + mixed_spectral_norm_sq(s, 1, 0),
        },
        "growth_l2h1": {
            "y": lambda s: _grad_hs_sq(model, s, model.state_fields(s)),
            "b": lambda s: spectral_norms(s)["ah"] ** 2,
            "a": lambda s: 1.0 + mixed_spectral_norm_sq(s, 0, 1),
        },
        "growth_h2l2": {
            "y": lambda s: _dz_hs_sq(model, s)[1],
            "b": lambda s: _h2_grad_sq(s),
            "a": lambda s: 1.0 + mixed_spectral_norm_sq(s, 2, 0),
        },
        "growth_bar": {
            "y": lambda s: _bar_grad_hs_sq(model, s, model.state_fields(s)),
            "b": _bar_lap_energy_sq,
            "a": lambda s: 1.0 + grid_gradient_energy_sq(s),
            "two_sided": bar_recoverable,
            "constructed": constructed_bar,
            "alignment": bar_align,
            # only the averaged-profile channel feeds this inequality
            "target": model.eta_report["sum_APhi_sup2"],
        },
    }
    eta2 = model.eta**2
    for name, cond in conditions.items():
        target = cond.get("target", eta2)
        eta2_fit = 0.0
        for s in cond.get("constructed", constructed):
            quad = _quadratic_part(cond["y"], s)
            bb = cond["b"](s)
            if bb > 1e-12:
                eta2_fit = max(eta2_fit, quad / bb)
        # c fitted as the residual envelope over the generic family
        c_fit = 0.0
        for s in generic:
            y = cond["y"](s)
            resid = y - eta2_fit * cond["b"](s)
            c_fit = max(c_fit, resid / cond["a"](s))
        if target > 0:
            ok = eta2_fit <= target * (1.0 + eta_rtol)
            if cond.get("two_sided") and aligned:
                # the fit must also reach the declared intensity: the
                # constructed samples are aligned with the transport
                # directions, so equality is attainable
                ok = ok and np.sqrt(eta2_fit / target) >= 1.0 - eta_rtol
        else:
            ok = eta2_fit <= 1e-12
        item = {
            "name": name,
            "eta2_fit": eta2_fit,
            "eta2_declared": eta2,
            "eta2_target": target,
            "eta_ratio": float(np.sqrt(eta2_fit / target))
            if target > 0
            else 0.0,
            "c_fit": c_fit,
            "pass": bool(ok),
        }
        if "alignment" in cond:
            item["alignment"] = cond["alignment"]
        report["items"].append(item)
        if not ok:
            report["pass"] = False
    _boundary_items(model, generic, report)
    return report


def _h2_grad_sq(s):
    """|| dzz (-Lap)^(1/2) U ||^2 diagonal."""
    b = s.basis
    kz4 = (b.vert_sin.k * np.pi / b.grid.domain.h) ** 4
    return float(
        np.sum(b.dirvec_vals[:, None] * kz4[None, :] * s.vck**2)
        + np.sum(b.neumann_vals[:, None] * kz4[None, :] * s.tc**2)
    )


def _boundary_items(model, states, report):
    """Lid-trace growth of dz sigma1 and sigma2."""
    g = model.basis.grid
    from .state import dz_state_fields

    worst1, worst2 = 0.0, 0.0
    for s in states:
        fields = model.state_fields(s)
        dzv, _ = dz_state_fields(s, order=1)
        den1 = 0.0
        den2 = 0.0
        for lid in (0, -1):
            den1 += float(
                np.sum(g.wxy * (dzv[0][..., lid] ** 2 + dzv[1][..., lid] ** 2))
            )
            den1 += float(np.sum(g.wxy * fields["T"][..., lid] ** 2))
            gd = (
                g.dx(dzv[0])[..., lid] ** 2
                + g.dy(dzv[0])[..., lid] ** 2
                + g.dx(dzv[1])[..., lid] ** 2
                + g.dy(dzv[1])[..., lid] ** 2
            )
            den1 += float(np.sum(g.wxy * gd))
        den2 = den1
        num1 = 0.0
        num2 = 0.0
        for k in range(model.K):
            d1 = model.dz_sigma1_apply(s, k)
            s2 = model.sigma2_apply(s, k, fields)
            for lid in (0, -1):
                num1 += float(
                    np.sum(
                        g.wxy
                        * (d1[0][..., lid] ** 2 + d1[1][..., lid] ** 2)
                    )
                )
                num2 += float(np.sum(g.wxy * s2[..., lid] ** 2))
        if den1 > 0:
            worst1 = max(worst1, num1 / den1)
            worst2 = max(worst2, num2 / den2)
    report["items"].append(
        {"name": "boundary_dz_sigma1_ratio", "constant": worst1, "pass": True}
    )
    report["items"].append(
        {"name": "boundary_sigma2_ratio", "constant": worst2, "pass": True}
    )


# ----------------------------------------------------------------------
# orchestration

SUITES = (
    "poincare",
    "holder",
    "interpolation",
    "log_sobolev",
    "nonlinearity",
    "vertical_poincare",
    "cancellation",
    "noise_growth",
)


def run_suites(names=None, basis=None, noise_model=None, n_samples=None,
               seed=None):
    """Run the named suites at the reference configuration."""
    names = list(names or SUITES)
    basis = basis or reference_basis()
    reports = []
    for name in names:
        if name == "poincare":
            reports.append(
                poincare_suite(
                    basis,
                    n_samples or 100,
                    truncations=(min(10, basis.n), basis.n // 2 or 1),
                    seed=seed,
                )
            )
        elif name == "holder":
            reports.append(holder_suite(basis, n_samples or 100, seed))
        elif name == "interpolation":
            reports.append(interpolation_suite(basis, n_samples or 300, seed))
        elif name == "log_sobolev":
            reports.append(log_sobolev_suite(basis, n_samples or 200, seed))
        elif name == "nonlinearity":
            reports.append(nonlinearity_suite(basis, n_samples or 500, seed))
        elif name == "vertical_poincare":
            reports.append(
                vertical_poincare_suite(basis, n_samples or 200, seed)
            )
        elif name == "cancellation":
            reports.append(cancellation_suite(basis, n_samples or 200, seed))
        elif name == "noise_growth":
            model = noise_model or NoiseModel(
                basis,
                NoiseParams(K=8, amp_psi=0.3, amp_psiT=0.3, amp_phi=0.2),
            )
            reports.append(noise_growth_suite(model, n_samples or 40, seed))
        else:
            raise ConfigurationError(f"unknown suite {name!r}")
    return reports


def calibrate(basis=None, n_samples=None):
    """Recompute every calibrated constant and write the fixture."""
    basis = basis or reference_basis()
    constants = {}
    constants.update(
        interpolation_constants(basis, n_samples or 300)
    )
    constants.update(nonlinearity_constants(basis, n_samples or 500))
    constants.update(vertical_poincare_constants(basis, n_samples or 200))
    constants["log_sobolev_c"] = _log_sobolev_family_max(
        basis, n_samples or 200, REFERENCE["seed"]
    )
    save_calibration(constants)
    return constants
