"""Command-line surface: basis / run / ensemble / check / export.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
failure, 3 verification-suite failure.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import checks
from .basis import get_basis
from .config import RunManifest, parse_config, smallness_warnings
from .errors import ConfigurationError, NumericalError
from .noise import NoiseModel
from .operators import (
    OperatorContext,
    project_forcing,
    recover_surface_pressure,
)
from .sde import run_ensemble, run_path
from .state import (
    baroclinic_remainder,
    diagnose_w,
    load_checkpoint,
    random_state,
    reconstruct_pressure,
    save_checkpoint,
    temperature_to_grid,
    velocity_to_grid,
    vertical_average,
    zero_state,
)


def _parse_overrides(pairs):
    out = {}
    for p in pairs or []:
        if "=" not in p:
            raise ConfigurationError(f"--set expects section.key=value: {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _assemble(setup):
    """Build (basis, ctx, noise_model, forcing_state, forcing_fv)."""
    basis = get_basis(setup.domain, setup.n, setup.n_z, setup.cache_dir)
    ctx = OperatorContext(basis=basis, **setup.physics)
    model = None
    if setup.noise.K > 0 and setup.noise.family == "trig":
        model = NoiseModel(basis, setup.noise)
    forcing_state, forcing_fv = build_forcing(setup, basis, ctx)
    return basis, ctx, model, forcing_state, forcing_fv


def build_forcing(setup, basis, ctx):
    """Deterministic separable forcing fields per the config spec."""
    if setup.forcing["kind"] == "none":
        return None, None
    g = basis.grid
    x = np.sin(np.pi * g.x.nodes / g.domain.Lx)[:, None, None]
    y = np.sin(np.pi * g.y.nodes / g.domain.Ly)[None, :, None]
    zc = np.cos(np.pi * (g.z.nodes + g.domain.h) / g.domain.h)[None, None, :]
    zs = np.sin(np.pi * (g.z.nodes + g.domain.h) / g.domain.h)[None, None, :]
    f_v = np.zeros((2, g.nxc, g.nyc, g.nzc))
    f_v[0] = setup.forcing["amp_v"] * x * y * zc
    f_T = setup.forcing["amp_t"] * x * y * zs
    state = project_forcing(ctx, f_v, f_T)
    return state, f_v


def build_initial(setup, basis):
    kind = setup.init["kind"]
    if kind == "zero":
        return zero_state(basis)
    if kind == "random":
        rng = np.random.default_rng(setup.init["seed"])
        return random_state(
            basis,
            rng,
            h1_norm=setup.init["h1_norm"],
            h2z_norm=setup.init["h2z_norm"],
            decay=setup.init["decay"],
        )
    raise ConfigurationError(f"unknown init kind {kind!r}")


def _warn(setup, model):
    if model is not None:
        for w in smallness_warnings(setup, model.eta):
            print(f"warning: {w}", file=sys.stderr)


def cmd_basis(args):
    setup = parse_config(args.config, _parse_overrides(args.set))
    basis = get_basis(setup.domain, setup.n, setup.n_z, setup.cache_dir)
    from .basis import basis_cache_key, default_cache_dir

    key = basis_cache_key(setup.domain, setup.n, setup.n_z)
    cache = setup.cache_dir or default_cache_dir()
    print(os.path.join(cache, f"basis-{key}.bin"))
    print(f"n={basis.n} n_z={basis.n_z} lambda_bar={basis.lambda_bar():.6g}")
    return 0


def cmd_run(args):
    setup = parse_config(args.config, _parse_overrides(args.set))
    out_dir = args.out or setup.output_dir
    os.makedirs(out_dir, exist_ok=True)
    basis, ctx, model, forcing_state, forcing_fv = _assemble(setup)
    _warn(setup, model)
    initial = build_initial(setup, basis)
    manifest = RunManifest.build(
        setup,
        n_paths=1,
        outputs=[os.path.join(out_dir, "ledger.csv")],
    )
    mhash = manifest.hash()
    chash = setup.config_hash_bytes()

    def checkpoint_cb(i, st):
        save_checkpoint(
            os.path.join(out_dir, f"checkpoint-{i:08d}.bin"), st, chash
        )

    t0 = time.perf_counter()
    res = run_path(
        setup.sim,
        initial,
        ctx,
        noise_model=model,
        forcing=forcing_state,
        forcing_fv=forcing_fv,
        checkpoint_cb=checkpoint_cb,
    )
    manifest.wall_seconds = time.perf_counter() - t0
    manifest.step_counts = [res.n_steps]
    res.ledger.write_csv(os.path.join(out_dir, "ledger.csv"), mhash)
    save_checkpoint(os.path.join(out_dir, "final.bin"), res.final_state, chash)
    manifest.outputs.append(os.path.join(out_dir, "final.bin"))
    manifest.write(os.path.join(out_dir, "manifest.json"))
    status = "stopped" if res.stopped else "completed"
    print(
        f"{status} t={res.final_state.time:.6g} steps={res.n_steps} "
        f"blowup={res.ledger.blowup_value():.6g}"
    )
    return 0


def cmd_ensemble(args):
    setup = parse_config(args.config, _parse_overrides(args.set))
    out_dir = args.out or setup.output_dir
    os.makedirs(out_dir, exist_ok=True)
    basis, ctx, model, forcing_state, _ = _assemble(setup)
    _warn(setup, model)
    manifest = RunManifest.build(setup, n_paths=args.paths)
    t0 = time.perf_counter()
    rep = run_ensemble(
        setup.sim, args.paths, ctx, noise_model=model, forcing=forcing_state
    )
    manifest.wall_seconds = time.perf_counter() - t0
    payload = {
        "manifest_hash": manifest.hash(),
        "n_paths": rep.n_paths,
        "n_failed": rep.n_failed,
        "means": rep.means,
        "quantiles": rep.quantiles,
    }
    path = os.path.join(out_dir, "ensemble.json")
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest.outputs.append(path)
    manifest.write(os.path.join(out_dir, "manifest.json"))
    print(f"paths={rep.n_paths} failed={rep.n_failed}")
    for k, v in sorted(rep.means.items()):
        print(f"  mean {k} = {v:.6g}")
    return 0


def cmd_check(args):
    if args.calibrate:
        constants = checks.calibrate()
        print(f"calibrated {len(constants)} constants")
        return 0
    names = args.suites.split(",") if args.suites else None
    reports = checks.run_suites(names)
    payload = {"reports": reports, "pass": all(r["pass"] for r in reports)}
    text = json.dumps(payload, indent=2, sort_keys=True, default=float)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text + "\n")
    else:
        print(text)
    for r in reports:
        mark = "PASS" if r["pass"] else "FAIL"
        print(f"[{mark}] {r['suite']}", file=sys.stderr)
    return 0 if payload["pass"] else 3


_EXPORT_WHAT = ("v", "T", "w", "ps", "p", "vbar", "vtilde")


def cmd_export(args):
    setup = parse_config(args.config, _parse_overrides(args.set))
    basis, ctx, model, _, forcing_fv = _assemble(setup)
    st, chash = load_checkpoint(args.checkpoint, basis)
    os.makedirs(args.out, exist_ok=True)
    what = args.what.split(",") if args.what else list(_EXPORT_WHAT)
    g = basis.grid
    # exports trace back to the run through the checkpoint's config hash
    hash_hex = chash.hex()
    p_s = None

    def dump3(name, header, arrays):
        path = os.path.join(args.out, f"{name}.csv")
        with open(path, "w") as f:
            f.write(f"# config={hash_hex}\n")
            f.write(header + "\n")
            xs, ys, zs = np.meshgrid(
                g.x.nodes, g.y.nodes, g.z.nodes, indexing="ij"
            )
            cols = [xs.ravel(), ys.ravel(), zs.ravel()] + [
                a.ravel() for a in arrays
            ]
            for row in zip(*cols):
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return path

    def dump2(name, header, arrays):
        path = os.path.join(args.out, f"{name}.csv")
        with open(path, "w") as f:
            f.write(f"# config={hash_hex}\n")
            f.write(header + "\n")
            xs, ys = np.meshgrid(g.x.nodes, g.y.nodes, indexing="ij")
            cols = [xs.ravel(), ys.ravel()] + [a.ravel() for a in arrays]
            for row in zip(*cols):
                f.write(",".join(f"{v:.17g}" for v in row) + "\n")
        return path

    for name in what:
        if name == "v":
            v = velocity_to_grid(st)
            dump3("v", "x,y,z,v1,v2", [v[0], v[1]])
        elif name == "T":
            dump3("T", "x,y,z,T", [temperature_to_grid(st)])
        elif name == "w":
            dump3("w", "x,y,z,w", [diagnose_w(st)])
        elif name == "vbar":
            vb = vertical_average(st)
            dump2("vbar", "x,y,vbar1,vbar2", [vb[0], vb[1]])
        elif name == "vtilde":
            vt = baroclinic_remainder(st)
            dump3("vtilde", "x,y,z,vt1,vt2", [vt[0], vt[1]])
        elif name in ("ps", "p"):
            if p_s is None:
                p_s, _ = recover_surface_pressure(ctx, st, forcing_fv)
            if name == "ps":
                dump2("ps", "x,y,ps", [p_s])
            else:
                p = reconstruct_pressure(g, p_s, st, ctx)
                dump3("p", "x,y,z,p", [p])
        else:
            raise ConfigurationError(f"unknown export quantity {name!r}")
    print(f"exported {','.join(what)} to {args.out}")
    return 0


def make_parser():
    p = argparse.ArgumentParser(
        prog="hsgs",
        description="hydrostatic spectral-Galerkin simulator",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", default=None, help="INI config file")
        sp.add_argument(
            "--set",
            action="append",
            metavar="section.key=value",
            help="override a config entry",
        )

    sp = sub.add_parser("basis", help="build and cache the tensor basis")
    common(sp)
    sp.set_defaults(func=cmd_basis)

    sp = sub.add_parser("run", help="integrate one path")
    common(sp)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("ensemble", help="Monte Carlo over paths")
    common(sp)
    sp.add_argument("--paths", type=int, required=True)
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_ensemble)

    sp = sub.add_parser("check", help="run verification suites")
    common(sp)
    sp.add_argument("--suites", default=None, help="comma-separated names")
    sp.add_argument("--calibrate", action="store_true")
    sp.add_argument("--out", default=None)
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("export", help="dump grid fields from a checkpoint")
    common(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--what", default=None)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
