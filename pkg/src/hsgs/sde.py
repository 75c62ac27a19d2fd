"""Semi-implicit Euler-Maruyama integrator for the projected system.

One step of

    dU + [ nu A_H U + theta(U) B(U,U) + F(U) ] dt = sigma(U) dW

treats the stiff diagonal part implicitly (divide each coefficient by
1 + dt nu lambda) and everything else explicitly at the old state.  The
scheme is weak order 1; no Milstein correction is applied to the
transport noise (documented limitation).

The energy ledger samples every monitored norm each step (or at a
configured stride); running integrals use left-endpoint quadrature, so
the blow-up functional is adapted to the information the explicit part
of the scheme has seen.
"""

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import kernels, norms
from .errors import ConfigurationError
from .noise import NoiseModel, path_rng, wiener_increments
from .operators import (
    OperatorContext,
    assemble_F,
    nonlinear_B,
    recover_surface_pressure,
)
from .state import (
    State,
    div_vbar_norm,
    random_state,
    spectral_norms,
)

MODES = ("raw", "cutoff_linf_l4", "cutoff_h1_l4")
BLOWUP_DISABLED = math.inf


@dataclass
class SimConfig:
    """Time-discretisation, cut-off, and monitoring parameters."""

    dt: float
    t_end: float
    mode: str = "raw"
    rho: float = 1.0
    mu: float = 1.0
    blowup_threshold: float = BLOWUP_DISABLED
    seed: int = 0
    ledger_q_list: tuple = (2, 4, 6, 132)
    ledger_stride: int = 1
    checkpoint_stride: int = 0
    include_nonlinearity: bool = True
    track_pressure: bool = True

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.t_end < self.dt and self.t_end != 0.0:
            raise ConfigurationError("t_end must be >= dt (or exactly 0)")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if self.rho <= 0 or self.mu <= 0:
            raise ConfigurationError("cut-off scales must be positive")
        if self.blowup_threshold <= 0:
            raise ConfigurationError("blow-up threshold must be positive")


# ----------------------------------------------------------------------
# cut-off


def _bump_ramp(s):
    """C-infinity ramp: 0 for s <= 0, 1 for s >= 1."""
    def f(t):
        with np.errstate(divide="ignore", over="ignore"):
            return np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)

    fs = f(s)
    return fs / (fs + f(1.0 - s))


def cutoff_theta(x, lam):
    """Smooth plateau function: 1 on |x| <= lam/2, 0 on |x| >= lam."""
    if lam <= 0:
        raise ConfigurationError("cut-off scale must be positive")
    u = abs(float(x)) / lam
    if u <= 0.5:
        return 1.0
    if u >= 1.0:
        return 0.0
    return float(_bump_ramp(2.0 - 2.0 * u))


def cutoff_state(st: State, config: SimConfig):
    """theta_rho(||U||_{Linf_z L4}) or theta_mu(||U||_{H1_z L4})."""
    if config.mode == "cutoff_linf_l4":
        return cutoff_theta(norms.norm_linfz_l4(st), config.rho)
    if config.mode == "cutoff_h1_l4":
        return cutoff_theta(norms.norm_h1z_l4(st), config.mu)
    return 1.0


# ----------------------------------------------------------------------
# one step


def _implicit_divide(st: State, dt, ctx: OperatorContext):
    b = st.basis
    st.vc0 /= 1.0 + dt * ctx.nu_v * b.stokes_vals
    st.vck /= 1.0 + dt * ctx.nu_v * b.dirvec_vals[:, None]
    st.tc /= 1.0 + dt * ctx.nu_T * b.neumann_vals[:, None]
    return st


def step(
    st: State,
    dt,
    increments,
    config: SimConfig,
    ctx: OperatorContext,
    noise_model: NoiseModel = None,
    forcing: State = None,
):
    """One semi-implicit Euler-Maruyama step.

    Returns (state, blown_up).  A non-finite result is a blow-up signal,
    not an error; callers record it and stop the path.
    """
    if ctx.beta_T == 0.0 and ctx.k0 == 0.0 and forcing is None:
        drift = None  # F vanishes identically; skip the allocations
    else:
        drift = assemble_F(ctx, st, forcing)
    if config.include_nonlinearity:
        theta = cutoff_state(st, config)
        if theta > 0.0:
            bterm = theta * nonlinear_B(ctx, st, st)
            drift = bterm if drift is None else drift + bterm
    new = st.copy() if drift is None else st - dt * drift
    if noise_model is not None and len(increments):
        new = new + noise_model.weighted_sum_state(st, increments)
    new = _implicit_divide(new, dt, ctx)
    new.time = st.time + dt
    return new, not new.check_finite()


# ----------------------------------------------------------------------
# energy ledger


LEDGER_FIXED = [
    "time",
    "norm_l2",
    "norm_grad_h",
    "norm_dz",
    "norm_dzz",
    "norm_h1",
    "norm_linfz_l4",
    "norm_h1z_l4",
    "norm_vbar_h1",
    "norm_vtilde_l4",
    "norm_grad_ps",
    "div_vbar",
    "int_ah_sq",
    "int_h1zh1_sq",
    "int_vinf_sq",
    "blowup_value",
    "stopped",
]


class EnergyLedger:
    """Time series of the monitored norms plus the blow-up functional."""

    def __init__(self, q_list=(2, 4, 6, 132)):
        self.q_list = tuple(q_list)
        self.columns = LEDGER_FIXED[:11] + [
            f"norm_v_l{q:g}" for q in self.q_list
        ] + LEDGER_FIXED[11:]
        self.rows = []
        self.sup_h1_sq = 0.0
        self.int_ah_sq = 0.0
        self.int_h1zh1_sq = 0.0
        self.int_vinf_sq = 0.0
        self.stop_time = None
        self.stopped = False

    def accumulate(self, st: State, dt):
        """Left-endpoint contribution of one completed step."""
        sn = spectral_norms(st)
        self.int_ah_sq += dt * sn["ah"] ** 2
        self.int_h1zh1_sq += dt * sn["h1z_h1xy"] ** 2
        self.int_vinf_sq += dt * norms.norm_linf(st, part="v") ** 2

    def blowup_value(self):
        return self.sup_h1_sq + self.int_ah_sq + self.int_h1zh1_sq

    def sample(self, st: State, ctx: OperatorContext, config: SimConfig,
               forcing_fv=None):
        sn = spectral_norms(st)
        self.sup_h1_sq = max(self.sup_h1_sq, sn["h1"] ** 2)
        vtilde = st.copy()
        vtilde.vc0[:] = 0.0
        vbar_h1 = float(
            np.sqrt(np.sum((1.0 + st.basis.stokes_vals) * st.vc0**2))
        )
        if config.track_pressure:
            _, grad_ps = recover_surface_pressure(ctx, st, forcing_fv)
        else:
            grad_ps = 0.0
        row = {
            "time": st.time,
            "norm_l2": sn["l2"],
            "norm_grad_h": sn["grad_h"],
            "norm_dz": sn["dz"],
            "norm_dzz": sn["dzz"],
            "norm_h1": sn["h1"],
            "norm_linfz_l4": norms.norm_linfz_l4(st),
            "norm_h1z_l4": norms.norm_h1z_l4(st),
            "norm_vbar_h1": vbar_h1,
            "norm_vtilde_l4": norms.norm_lq(vtilde, 4, part="v"),
            "norm_grad_ps": grad_ps,
            "div_vbar": div_vbar_norm(st),
            "int_ah_sq": self.int_ah_sq,
            "int_h1zh1_sq": self.int_h1zh1_sq,
            "int_vinf_sq": self.int_vinf_sq,
            "blowup_value": self.blowup_value(),
            "stopped": int(self.stopped),
        }
        for q in self.q_list:
            row[f"norm_v_l{q:g}"] = norms.norm_lq(st, q, part="v")
        self.rows.append(row)
        return row

    def mark_stopped(self, t):
        self.stopped = True
        self.stop_time = t
        if self.rows:
            self.rows[-1]["stopped"] = 1

    def write_csv(self, path, manifest_hash=""):
        with open(path, "w", newline="") as f:
            if manifest_hash:
                f.write(f"# manifest={manifest_hash}\n")
            writer = csv.writer(f)
            writer.writerow(self.columns)
            for row in self.rows:
                writer.writerow(
                    _fmt(row[c]) if c != "stopped" else str(row[c])
                    for c in self.columns
                )

    def series(self, column):
        return np.array([r[column] for r in self.rows])


def _fmt(x):
    return f"{float(x):.17g}"


def blowup_monitor(ledger: EnergyLedger, threshold):
    """First sample time at which the blow-up functional crosses the
    threshold; None if it never does.  Monotone in the threshold since
    the functional is non-decreasing in time."""
    if threshold == BLOWUP_DISABLED:
        return None
    for row in ledger.rows:
        if row["blowup_value"] >= threshold:
            return row["time"]
    return None


# ----------------------------------------------------------------------
# path and ensemble drivers


@dataclass
class PathResult:
    final_state: State
    ledger: EnergyLedger
    stopped: bool
    stop_time: float
    blown_up: bool
    n_steps: int
    seed_key: tuple


def run_path(
    config: SimConfig,
    initial: State,
    ctx: OperatorContext,
    noise_model: NoiseModel = None,
    forcing: State = None,
    forcing_fv=None,
    path_index=0,
    checkpoint_cb=None,
):
    """Integrate one path until t_end, blow-up, or loss of finiteness.

    checkpoint_cb(step_index, state) is invoked at the configured
    checkpoint stride; ledger rows at the ledger stride (plus t = 0 and
    the final state).
    """
    rng = path_rng(config.seed, path_index)
    ledger = EnergyLedger(config.ledger_q_list)
    st = initial.copy()
    ledger.sample(st, ctx, config, forcing_fv)
    n_steps = int(round(config.t_end / config.dt))
    blown = False
    i = 0
    K = noise_model.K if noise_model is not None else 0
    for i in range(1, n_steps + 1):
        ledger.accumulate(st, config.dt)
        dw = (
            wiener_increments(rng, K, config.dt) if K else np.zeros(0)
        )
        st, blown = step(
            st, config.dt, dw, config, ctx, noise_model, forcing
        )
        if blown:
            ledger.mark_stopped(st.time)
            break
        if i % config.ledger_stride == 0 or i == n_steps:
            ledger.sample(st, ctx, config, forcing_fv)
        if (
            checkpoint_cb is not None
            and config.checkpoint_stride
            and i % config.checkpoint_stride == 0
        ):
            checkpoint_cb(i, st)
        if ledger.blowup_value() >= config.blowup_threshold:
            ledger.mark_stopped(st.time)
            break
    stopped = ledger.stopped
    return PathResult(
        final_state=st,
        ledger=ledger,
        stopped=stopped,
        stop_time=ledger.stop_time if stopped else config.t_end,
        blown_up=blown,
        n_steps=min(i, n_steps) if n_steps else 0,
        seed_key=(config.seed, path_index),
    )


@dataclass
class EnsembleReport:
    n_paths: int
    n_failed: int
    means: dict
    quantiles: dict
    per_path: list


_ENSEMBLE_STATS = [
    "sup_norm_h1_sq",
    "sup_norm_l2_sq",
    "int_ah_sq",
    "int_h1zh1_sq",
    "int_vinf_sq",
    "final_norm_l2",
]


def _path_summary(res: PathResult):
    led = res.ledger
    h1 = led.series("norm_h1")
    l2 = led.series("norm_l2")
    return {
        "sup_norm_h1_sq": float((h1**2).max()),
        "sup_norm_l2_sq": float((l2**2).max()),
        "int_ah_sq": led.int_ah_sq,
        "int_h1zh1_sq": led.int_h1zh1_sq,
        "int_vinf_sq": led.int_vinf_sq,
        "final_norm_l2": float(l2[-1]),
        "stopped": res.stopped,
        "blown_up": res.blown_up,
        "stop_time": res.stop_time,
    }


def run_ensemble(
    config: SimConfig,
    n_paths,
    ctx: OperatorContext,
    noise_model: NoiseModel = None,
    forcing: State = None,
    initial_factory=None,
):
    """Monte Carlo over independent paths with per-path seeded streams.

    initial_factory(path_index) -> State; defaults to the band-limited
    random data generator with unit H1 norm and the path's own stream.
    Per-path failures are recorded, not raised.  Aggregation runs in
    path-index order with compensated summation, so it is independent of
    any scheduling order.
    """
    if n_paths < 1:
        raise ConfigurationError("n_paths must be >= 1")
    if initial_factory is None:
        def initial_factory(i):
            return random_state(
                ctx.basis, path_rng(config.seed ^ 0x5EED, i), h1_norm=1.0
            )

    summaries = [None] * n_paths
    failures = 0
    for i in range(n_paths):
        try:
            res = run_path(
                config, initial_factory(i), ctx, noise_model, forcing,
                path_index=i,
            )
            summaries[i] = _path_summary(res)
        except Exception as exc:  # recorded, never aborts the ensemble
            failures += 1
            summaries[i] = {"error": repr(exc)}
    valid = [s for s in summaries if s is not None and "error" not in s]
    means, quants = {}, {}
    for key in _ENSEMBLE_STATS:
        vals = np.array([s[key] for s in valid]) if valid else np.zeros(0)
        if len(vals):
            means[key] = kernels.kahan_sum(np.sort(vals)) / len(vals)
            quants[key] = {
                "q10": float(np.quantile(vals, 0.1)),
                "q50": float(np.quantile(vals, 0.5)),
                "q90": float(np.quantile(vals, 0.9)),
            }
    return EnsembleReport(
        n_paths=n_paths,
        n_failed=failures,
        means=means,
        quantiles=quants,
        per_path=summaries,
    )
