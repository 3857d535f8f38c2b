#!/usr/bin/env python3
"""Compare the compiled and pure-numpy retrieval kernels.

Times the forward model and the bracketed inversion on reproducible random
inputs, one row per problem size, and reports the compiled-vs-pure speedup
plus a cross-backend agreement check.

    python benchmarks/bench_kernels.py --sizes 1000 10000 100000 --repeats 3
"""
import argparse
import time

import numpy as np

from sarwind import _kernels_py as pure
from sarwind.cmod5n import load_coefficients

try:
    from sarwind import _kernels as compiled
except ImportError:
    compiled = None


def _inputs(n, seed):
    rng = np.random.default_rng(seed)
    v = rng.uniform(0.5, 28.0, n)
    phi = rng.uniform(0.0, 360.0, n)
    theta = rng.uniform(20.0, 46.0, n)
    return v, phi, theta


def _best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(
        description="benchmark the wind-retrieval kernels across backends"
    )
    ap.add_argument("--sizes", type=int, nargs="+",
                    default=[1_000, 10_000, 100_000],
                    help="array lengths to time")
    ap.add_argument("--repeats", type=int, default=3,
                    help="take the best of this many runs")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    if compiled is None:
        print("compiled extension not built; showing the pure backend only\n")

    c = load_coefficients()
    header = (f"{'op':<9}{'n':>9}{'pure [ms]':>12}{'compiled [ms]':>15}"
              f"{'speedup':>9}")
    print(header)
    print("-" * len(header))

    worst_fwd = 0.0
    worst_inv = 0.0
    for n in args.sizes:
        v, phi, theta = _inputs(n, args.seed)
        s0 = pure.forward(v, phi, theta, c)
        ops = [
            ("forward", lambda k: k.forward(v, phi, theta, c)),
            ("invert", lambda k: k.invert(s0, phi, theta, c, 0.2, 50.0, 0.01)),
        ]
        for name, call in ops:
            t_pure = _best_of(lambda: call(pure), args.repeats)
            if compiled is None:
                print(f"{name:<9}{n:>9}{t_pure * 1e3:>12.2f}{'-':>15}{'-':>9}")
                continue
            t_comp = _best_of(lambda: call(compiled), args.repeats)
            print(f"{name:<9}{n:>9}{t_pure * 1e3:>12.2f}"
                  f"{t_comp * 1e3:>15.2f}{t_pure / t_comp:>9.1f}x")
        if compiled is not None:
            worst_fwd = max(worst_fwd, float(np.max(np.abs(
                pure.forward(v, phi, theta, c)
                - compiled.forward(v, phi, theta, c)))))
            wp, _ = pure.invert(s0, phi, theta, c, 0.2, 50.0, 0.01)
            wc, _ = compiled.invert(s0, phi, theta, c, 0.2, 50.0, 0.01)
            worst_inv = max(worst_inv, float(np.max(np.abs(wp - wc))))

    if compiled is not None:
        print(f"\nbackend agreement: forward max|diff| {worst_fwd:.3e}, "
              f"inverted wind max|diff| {worst_inv:.3e} m/s")


if __name__ == "__main__":
    main()
