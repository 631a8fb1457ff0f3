#!/usr/bin/env python3
"""Benchmark the compiled vs numpy blockwise metric kernels.

These scans are the inner loop of the no-reference metrics (one EME pass per
RGB channel plus one log-AMEE pass per image), so directory-scale evaluation
runs them thousands of times.

Usage: python benchmarks/bench_blockops.py [--size 1024] [--repeats 50]
"""

import argparse
import time

import numpy as np

from uwbright.blockops import BACKEND, available_backends
from uwbright.metrics import uiqm


def time_fn(fn, *args, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--size", type=int, default=1024, help="square test-image side")
    parser.add_argument("--repeats", type=int, default=50)
    parser.add_argument("--block", type=int, default=8)
    args = parser.parse_args()

    size = args.size - args.size % args.block
    rng = np.random.default_rng(0)
    plane = rng.random((size, size)) * 255.0
    backends = available_backends()

    print(f"active backend: {BACKEND}")
    print(f"plane {size}x{size}, block {args.block}, best of {args.repeats}\n")
    header = f"{'kernel':<28}" + "".join(f"{name:>12}" for name in sorted(backends))
    print(header)
    print("-" * len(header))

    rows = [
        ("block_log_ratio_sum", lambda mod: mod.block_log_ratio_sum(plane, args.block)),
        (
            "block_plip_contrast_sum",
            lambda mod: mod.block_plip_contrast_sum(plane, args.block, 1026.0),
        ),
    ]
    timings = {}
    for label, runner in rows:
        cells = []
        for name in sorted(backends):
            best = time_fn(runner, backends[name], repeats=args.repeats)
            timings[(label, name)] = best
            cells.append(f"{best * 1e3:>9.3f} ms")
        print(f"{label:<28}" + "".join(f"{c:>12}" for c in cells))

    if "cython" in backends:
        for label, _ in rows:
            speedup = timings[(label, "numpy")] / timings[(label, "cython")]
            print(f"\n{label}: cython is {speedup:.1f}x the numpy backend")

    image = rng.random((size, size, 3))
    best = time_fn(uiqm, image, repeats=max(3, args.repeats // 10))
    print(f"\nfull uiqm() on {size}x{size}x3 via '{BACKEND}': {best * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
