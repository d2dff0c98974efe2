"""Compare the numba kernels with their pure-numpy twins.

Run with ``python3 benchmarks/bench_kernels.py [--n 1600] [--repeats 5]``.
Both backends are imported in the same process, so the environment flag
is not needed here.
"""

import argparse
import time

import numpy as np

from eigrefine import kernels


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, rng):
    Y = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    d = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    labels = np.arange(n, dtype=np.int64)
    labels[:6] = 0
    delta = 1.0 / n
    count = n * n
    return {
        "correction_matrix": (
            lambda: kernels.correction_matrix_numba(Y, d, labels),
            lambda: kernels.correction_matrix_numpy(Y, d, labels)),
        "min_pairwise_gap": (
            lambda: kernels.min_pairwise_gap_numba(d),
            lambda: kernels.min_pairwise_gap_numpy(d)),
        "chain_labels": (
            lambda: kernels.chain_labels_numba(d, delta),
            lambda: kernels.chain_labels_numpy(d, delta)),
        "xoshiro_normals": (
            lambda: kernels.xoshiro_normals_numba(kernels.splitmix64_seed(1), count),
            lambda: kernels.xoshiro_normals_numpy(kernels.splitmix64_seed(1), count)),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=1600)
    p.add_argument("--repeats", type=int, default=5)
    args = p.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed")
    rng = np.random.default_rng(0)
    print(f"n={args.n}, best of {args.repeats}")
    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}")
    for name, (fast, slow) in cases(args.n, rng).items():
        fast()  # compile outside the timed region
        t_nb = best_of(fast, args.repeats)
        t_np = best_of(slow, args.repeats)
        print(f"{name:<20}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
