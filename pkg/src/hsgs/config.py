"""Config-file parsing, run manifests, and the reproducibility contract.

Config files are flat INI-style key/value text with sections; every key
has a default, so a minimal file (or an empty one) is valid.  CLI flags
of the form ``--set section.key=value`` override file keys.

A :class:`RunManifest` snapshots everything that determines a run
bit-for-bit (config dict, code version, basis cache key, per-path
seeds); its hash is embedded in every output file.  Wall-clock and step
counts are recorded in the manifest but excluded from the hash.
"""

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .basis import basis_cache_key
from .domain import CylinderDomain
from .errors import ConfigurationError
from .noise import NoiseParams
from .sde import SimConfig

_DEFAULTS = {
    "domain": {
        "lx": "1.0",
        "ly": "1.0",
        "h": "1.0",
        "nx": "16",
        "ny": "16",
        "nz": "8",
    },
    "basis": {"n": "8", "n_z": "4", "cache_dir": ""},
    "physics": {
        "nu_v": "1.0",
        "nu_t": "1.0",
        "k0": "0.0",
        "rho0": "1.0",
        "beta_t": "0.0",
        "g": "9.81",
        "t_r": "0.0",
        "dealias": "1.5",
    },
    "sim": {
        "dt": "1e-3",
        "t_end": "0.1",
        "mode": "raw",
        "rho": "1.0",
        "mu": "1.0",
        "blowup_threshold": "inf",
        "seed": "0",
        "ledger_q": "2,4,6,132",
        "ledger_stride": "1",
        "checkpoint_stride": "0",
        "include_nonlinearity": "true",
        "track_pressure": "true",
    },
    "noise": {
        "family": "trig",
        "k": "0",
        "amp_psi": "0.0",
        "amp_phi": "0.0",
        "amp_psit": "0.0",
        "amp_zeta": "0.0",
        "amp_nu": "0.0",
        "amp_chi": "0.0",
        "amp_gamma": "0.0",
        "amp_theta": "0.0",
        "amp_zhat": "0.0",
        "amp_nhat": "0.0",
        "amp_chat": "0.0",
        "decay": "2.0",
        "ripple": "0.0",
        "aligned": "true",
        "seed": "0",
    },
    "forcing": {"kind": "none", "amp_v": "0.0", "amp_t": "0.0"},
    "init": {
        "kind": "random",
        "h1_norm": "1.0",
        "h2z_norm": "",
        "decay": "1.5",
        "seed": "1",
    },
    "output": {"dir": "out"},
}


def _parse_bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"not a boolean: {s!r}")


@dataclass
class RunSetup:
    """Everything needed to assemble and run a simulation."""

    domain: CylinderDomain
    n: int
    n_z: int
    cache_dir: str
    physics: dict
    sim: SimConfig
    noise: NoiseParams
    forcing: dict
    init: dict
    output_dir: str
    raw: dict
    warnings: list = field(default_factory=list)

    def config_hash_bytes(self):
        payload = json.dumps(self.raw, sort_keys=True).encode()
        return hashlib.sha256(payload).digest()


def parse_config(path=None, overrides=None) -> RunSetup:
    """Read and validate a config file; returns the assembled setup.

    Smallness preconditions on the noise amplitude relative to the
    viscosity are evaluated later (they need the computed eta) via
    :func:`smallness_warnings`; structural parameter errors raise here.
    """
    cp = configparser.ConfigParser()
    cp.read_dict(_DEFAULTS)
    if path is not None:
        read = cp.read(path)
        if not read:
            raise ConfigurationError(f"cannot read config file {path}")
    for key, value in (overrides or {}).items():
        if "." not in key:
            raise ConfigurationError(f"override {key!r} must be section.key")
        section, opt = key.split(".", 1)
        if not cp.has_section(section) and section not in cp.defaults():
            raise ConfigurationError(f"unknown config section {section!r}")
        cp.set(section, opt, str(value))

    raw = {s: dict(cp.items(s)) for s in cp.sections()}
    d = raw["domain"]
    domain = CylinderDomain(
        Lx=float(d["lx"]),
        Ly=float(d["ly"]),
        h=float(d["h"]),
        Nx=int(d["nx"]),
        Ny=int(d["ny"]),
        Nz=int(d["nz"]),
    )
    s = raw["sim"]
    try:
        q_list = tuple(
            float(q) for q in s["ledger_q"].split(",") if q.strip()
        )
    except ValueError as exc:
        raise ConfigurationError(f"bad ledger_q list: {s['ledger_q']}") from exc
    sim = SimConfig(
        dt=float(s["dt"]),
        t_end=float(s["t_end"]),
        mode=s["mode"],
        rho=float(s["rho"]),
        mu=float(s["mu"]),
        blowup_threshold=float(s["blowup_threshold"]),
        seed=int(s["seed"]),
        ledger_q_list=q_list,
        ledger_stride=max(1, int(s["ledger_stride"])),
        checkpoint_stride=int(s["checkpoint_stride"]),
        include_nonlinearity=_parse_bool(s["include_nonlinearity"]),
        track_pressure=_parse_bool(s["track_pressure"]),
    )
    nz_sec = raw["noise"]
    noise = NoiseParams(
        family=nz_sec["family"],
        K=int(nz_sec["k"]),
        amp_psi=float(nz_sec["amp_psi"]),
        amp_phi=float(nz_sec["amp_phi"]),
        amp_psiT=float(nz_sec["amp_psit"]),
        amp_zeta=float(nz_sec["amp_zeta"]),
        amp_nu=float(nz_sec["amp_nu"]),
        amp_chi=float(nz_sec["amp_chi"]),
        amp_gamma=float(nz_sec["amp_gamma"]),
        amp_theta=float(nz_sec["amp_theta"]),
        amp_zhat=float(nz_sec["amp_zhat"]),
        amp_nhat=float(nz_sec["amp_nhat"]),
        amp_chat=float(nz_sec["amp_chat"]),
        decay=float(nz_sec["decay"]),
        ripple=float(nz_sec["ripple"]),
        aligned=_parse_bool(nz_sec["aligned"]),
        seed=int(nz_sec["seed"]),
    )
    if noise.family not in ("trig", "zero"):
        raise ConfigurationError(f"unknown noise family {noise.family!r}")
    p = raw["physics"]
    physics = {
        "nu_v": float(p["nu_v"]),
        "nu_T": float(p["nu_t"]),
        "k0": float(p["k0"]),
        "rho0": float(p["rho0"]),
        "beta_T": float(p["beta_t"]),
        "g": float(p["g"]),
        "T_r": float(p["t_r"]),
        "dealias": float(p["dealias"]),
    }
    init = dict(raw["init"])
    init["h1_norm"] = float(init["h1_norm"])
    init["h2z_norm"] = (
        float(init["h2z_norm"]) if init["h2z_norm"].strip() else None
    )
    init["decay"] = float(init["decay"])
    init["seed"] = int(init["seed"])
    forcing = dict(raw["forcing"])
    forcing["amp_v"] = float(forcing["amp_v"])
    forcing["amp_t"] = float(forcing["amp_t"])
    if forcing["kind"] not in ("none", "trig"):
        raise ConfigurationError(f"unknown forcing kind {forcing['kind']!r}")
    b = raw["basis"]
    return RunSetup(
        domain=domain,
        n=int(b["n"]),
        n_z=int(b["n_z"]),
        cache_dir=b["cache_dir"] or None,
        physics=physics,
        sim=sim,
        noise=noise,
        forcing=forcing,
        init=init,
        output_dir=raw["output"]["dir"],
        raw=raw,
    )


# c_BDG surrogate used in the reported smallness checks; the true
# Burkholder constant depends on the moment order and is not computable
# here, so 1.0 is documented and reported, never enforced.
C_BDG_SURROGATE = 1.0


def smallness_warnings(setup: RunSetup, eta):
    """Evaluate nu > eta^2 ((q-1)/2 + q c^2)-type preconditions.

    Violations are warnings (the run proceeds); the report lists each
    moment order checked.
    """
    out = []
    nu = min(setup.physics["nu_v"], setup.physics["nu_T"])
    for q in sorted({2.0, 4.0, *setup.sim.ledger_q_list}):
        bound = eta**2 * ((q - 1) / 2.0 + q * C_BDG_SURROGATE**2)
        if nu <= bound:
            out.append(
                f"smallness violated at q={q:g}: nu={nu:g} <= "
                f"eta^2((q-1)/2 + q c^2)={bound:g} (c_BDG surrogate "
                f"{C_BDG_SURROGATE})"
            )
    return out


@dataclass
class RunManifest:
    config: dict
    version: str
    basis_key: str
    path_seeds: list
    outputs: list
    wall_seconds: float = 0.0
    step_counts: list = field(default_factory=list)

    @classmethod
    def build(cls, setup: RunSetup, n_paths=1, outputs=()):
        seeds = [
            int(
                np.random.SeedSequence(
                    entropy=setup.sim.seed, spawn_key=(i,)
                ).generate_state(1)[0]
            )
            for i in range(n_paths)
        ]
        return cls(
            config=setup.raw,
            version=__version__,
            basis_key=basis_cache_key(setup.domain, setup.n, setup.n_z),
            path_seeds=seeds,
            outputs=list(outputs),
        )

    def hash(self):
        payload = json.dumps(
            {
                "config": self.config,
                "version": self.version,
                "basis_key": self.basis_key,
                "path_seeds": self.path_seeds,
            },
            sort_keys=True,
        ).encode()
        return hashlib.sha256(payload).hexdigest()

    def write(self, path):
        data = asdict(self)
        data["manifest_hash"] = self.hash()
        with open(path, "w") as f:
            json.dump(data, f, indent=2, sort_keys=True)
            f.write("\n")
