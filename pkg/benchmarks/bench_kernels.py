"""Benchmark the numba edge kernels against the pure-numpy fallback.

Run: python benchmarks/bench_kernels.py [--edges N] [--width W] [--repeat R]

The scatter-add (segment sum) is the hot kernel: every GNN layer calls it
once per forward and its adjoint (gather) once per backward, over the full
edge list. np.add.at is the numpy fallback and is known to be slow; this
script measures the actual gap on this machine.
"""

import argparse
import time

import numpy as np

from neighbor_xai import _kernels as K


def bench(fn, *args, repeat=20):
    fn(*args)  # warm-up (includes JIT compilation for numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--edges", type=int, default=200_000)
    ap.add_argument("--rows", type=int, default=20_000)
    ap.add_argument("--width", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    values = rng.normal(size=(args.edges, args.width))
    scores = rng.normal(size=args.edges)
    segments = rng.integers(0, args.rows, size=args.edges)
    x = rng.normal(size=(args.rows, args.width))

    cases = [
        ("gather_rows", (x, segments),
         K.gather_rows_numba, K.gather_rows_numpy),
        ("segment_sum_rows", (values, segments, args.rows),
         K.segment_sum_rows_numba, K.segment_sum_rows_numpy),
        ("scatter_add_rows", (values, segments, args.rows),
         K.scatter_add_rows_numba, K.scatter_add_rows_numpy),
        ("segment_max", (scores, segments, args.rows),
         K.segment_max_numba, K.segment_max_numpy),
    ]

    print(f"edges={args.edges} rows={args.rows} width={args.width} "
          f"repeat={args.repeat} (best of)")
    print(f"active backend: {K.backend_name()}")
    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>9}")
    for name, call_args, numba_fn, numpy_fn in cases:
        t_np = bench(numpy_fn, *call_args, repeat=args.repeat)
        if numba_fn is None:
            print(f"{name:<18} {t_np * 1e3:>8.2f}ms {'n/a':>10} {'n/a':>9}")
            continue
        t_nb = bench(numba_fn, *call_args, repeat=args.repeat)
        print(f"{name:<18} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
              f"{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
