#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Run:  python benchmarks/bench_kernels.py [--repeats N]

Backends are imported directly (not through the env-flag dispatch) so a
single process times both; the first numba call is excluded as JIT
warm-up.
"""

import argparse
import time

import numpy as np

from hsgs.kernels import _numba, _numpy

CASES = {
    "horizontal_lq_profile(q=4)": (
        lambda m: (m.horizontal_lq_profile,),
        lambda rng: (rng.standard_normal((4225, 17)), rng.uniform(0.5, 1.5, 4225), 4.0),
    ),
    "horizontal_lq_profile(q=132)": (
        lambda m: (m.horizontal_lq_profile,),
        lambda rng: (rng.standard_normal((4225, 17)), rng.uniform(0.5, 1.5, 4225), 132.0),
    ),
    "horizontal_linf_profile": (
        lambda m: (m.horizontal_linf_profile,),
        lambda rng: (rng.standard_normal((4225, 17)),),
    ),
    "cumtrapz_z": (
        lambda m: (m.cumtrapz_z,),
        lambda rng: (rng.standard_normal((4225, 33)), rng.uniform(0.01, 0.05, 32)),
    ),
    "stack_magnitude": (
        lambda m: (m.stack_magnitude,),
        lambda rng: tuple(rng.standard_normal((4225, 17)) for _ in range(3)),
    ),
    "kahan_sum": (
        lambda m: (m.kahan_sum,),
        lambda rng: (rng.standard_normal(200_000),),
    ),
}


def bench(fn, args, repeats):
    fn(*args)  # warm-up (JIT compile for the numba path)
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeats", type=int, default=7)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':34s} {'numpy':>10s} {'numba':>10s} {'speedup':>8s}")
    for name, (get, make) in CASES.items():
        data = make(rng)
        t_np = bench(get(_numpy)[0], data, args.repeats)
        t_nb = bench(get(_numba)[0], data, args.repeats)
        ref = get(_numpy)[0](*data)
        out = get(_numba)[0](*data)
        assert np.allclose(ref, out, rtol=1e-12, atol=1e-12)
        print(
            f"{name:34s} {t_np * 1e3:9.3f}ms {t_nb * 1e3:9.3f}ms "
            f"{t_np / t_nb:7.1f}x"
        )


if __name__ == "__main__":
    main()
