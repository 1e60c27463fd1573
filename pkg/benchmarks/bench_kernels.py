#!/usr/bin/env python3
"""Time the numba kernels against their pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per (kernel, size, backend) with the best wall time and
the numba speedup.  Set STREAMPROFILE_NUMBA=0 at runtime to see which
path the package itself would pick.
"""

import argparse
import time

import numpy as np

from streamprofile.kernels import BACKEND, available_backends


def _best_of(fn, args, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_lcs(impl, size, rng):
    a = rng.integers(0, 50, size=size).astype(np.int64)
    b = rng.integers(0, 50, size=size).astype(np.int64)
    return (a, b)


def bench_silhouette(impl, size, rng):
    points = rng.normal(size=(size, 16))
    dist = np.sqrt(((points[:, None, :] - points[None, :, :]) ** 2).sum(-1))
    np.fill_diagonal(dist, 0.0)
    labels = rng.integers(0, 3, size=size).astype(np.int64)
    labels[:3] = np.arange(3)
    return (dist, labels, 3)


def bench_nearest(impl, size, rng):
    x = rng.normal(size=(size, 16))
    c = rng.normal(size=(3, 16))
    return (x, c)


CASES = [
    ("lcs_length", bench_lcs, [200, 1000, 3000]),
    ("silhouette_samples", bench_silhouette, [200, 600, 1200]),
    ("nearest_centroid", bench_nearest, [1000, 10000, 100000]),
]


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    backends = available_backends()
    print(f"active package backend: {BACKEND}")
    print(f"{'kernel':22} {'size':>7} " + " ".join(f"{n:>12}" for n in backends) + "  speedup")
    rng = np.random.default_rng(0)
    for name, setup, sizes in CASES:
        for size in sizes:
            times = {}
            for backend_name, impl in backends.items():
                fn = getattr(impl, name)
                call_args = setup(impl, size, rng)
                fn(*call_args)  # warm up (jit compile)
                times[backend_name] = _best_of(fn, call_args, args.repeat)
            row = " ".join(f"{times[n] * 1e3:>10.2f}ms" for n in backends)
            speedup = ""
            if "numba" in times and "numpy" in times:
                speedup = f"{times['numpy'] / times['numba']:>6.1f}x"
            print(f"{name:22} {size:>7} {row}  {speedup}")


if __name__ == "__main__":
    main()
