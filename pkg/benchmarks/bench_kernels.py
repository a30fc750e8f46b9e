#!/usr/bin/env python3
"""Times the numba and numpy kernel paths side by side.

Covers both hot families from ``p4r.kernels``: the edge-wise weighted
gather that drives message passing, and the fused pairwise-loss /
gradient kernel that drives training.  Inputs mirror production dtypes
(int64 indices, float64 edge weights, float32 embeddings).

Run from the repository root:

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --repeats 30

Each kernel is warmed once per configuration before timing (the first
numba call pays JIT compilation), then the minimum over the repeat
count is reported.  The script also cross-checks that both paths agree
numerically before trusting the numbers.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from p4r import kernels

# (label, n_rows, n_cols, n_edges, dim)
GATHER_CONFIGS = [
    ("small graph, dim 64", 767, 3647, 27_453, 64),
    ("medium graph, dim 64", 5_000, 20_000, 400_000, 64),
    ("medium graph, dim 128", 5_000, 20_000, 400_000, 128),
]

# (label, n_users, n_items, dim, batch)
BPR_CONFIGS = [
    ("batch 2048, dim 64", 767, 3_647, 64, 2_048),
    ("batch 8192, dim 64", 5_000, 20_000, 64, 8_192),
    ("batch 8192, dim 128", 5_000, 20_000, 128, 8_192),
]


def random_csr(rng, n_rows, n_cols, n_edges):
    rows = np.sort(rng.integers(0, n_rows, size=n_edges))
    indices = rng.integers(0, n_cols, size=n_edges)
    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    weights = rng.random(n_edges)
    return indptr, indices, weights


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_gather(repeats):
    rows = []
    rng = np.random.default_rng(0)
    for label, n_rows, n_cols, n_edges, dim in GATHER_CONFIGS:
        indptr, indices, weights = random_csr(rng, n_rows, n_cols, n_edges)
        src = rng.standard_normal((n_cols, dim)).astype(np.float32)

        ref = kernels.segment_gather_numpy(indptr, indices, weights, src)
        alt = kernels.segment_gather_numba(indptr, indices, weights, src)
        err = float(np.abs(ref - alt).max())

        t_np = timeit(lambda: kernels.segment_gather_numpy(indptr, indices, weights, src), repeats)
        t_nb = timeit(lambda: kernels.segment_gather_numba(indptr, indices, weights, src), repeats)
        rows.append((label, t_np, t_nb, err))
    return rows


def bench_bpr(repeats):
    rows = []
    rng = np.random.default_rng(1)
    for label, n_users, n_items, dim, batch in BPR_CONFIGS:
        final_u = rng.standard_normal((n_users, dim)).astype(np.float32)
        final_i = rng.standard_normal((n_items, dim)).astype(np.float32)
        users = rng.integers(0, n_users, size=batch)
        pos = rng.integers(0, n_items, size=batch)
        neg = rng.integers(0, n_items, size=batch)

        def run(fn):
            gu = np.zeros_like(final_u)
            gi = np.zeros_like(final_i)
            return fn(final_u, final_i, users, pos, neg, gu, gi), gu, gi

        loss_np, gu_np, gi_np = run(kernels.bpr_batch_numpy)
        loss_nb, gu_nb, gi_nb = run(kernels.bpr_batch_numba)
        err = max(abs(loss_np - loss_nb) / max(abs(loss_np), 1.0),
                  float(np.abs(gu_np - gu_nb).max()),
                  float(np.abs(gi_np - gi_nb).max()))

        t_np = timeit(lambda: run(kernels.bpr_batch_numpy), repeats)
        t_nb = timeit(lambda: run(kernels.bpr_batch_numba), repeats)
        rows.append((label, t_np, t_nb, err))
    return rows


def print_table(title, rows):
    print()
    print(title)
    print(f"  {'configuration':<24} {'numpy':>10} {'numba':>10} {'speedup':>8} {'max diff':>10}")
    for label, t_np, t_nb, err in rows:
        print(f"  {label:<24} {t_np * 1e3:>8.3f}ms {t_nb * 1e3:>8.3f}ms "
              f"{t_np / t_nb:>7.2f}x {err:>10.2e}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=10,
                        help="timing repetitions per configuration (min is reported)")
    args = parser.parse_args()

    if not kernels.NUMBA_ENABLED:
        parser.error("numba path unavailable (P4R_NUMBA disabled or numba missing); "
                     "nothing to compare")

    print(f"repeats per configuration: {args.repeats} (best shown)")
    print_table("segment_gather (weighted CSR gather)", bench_gather(args.repeats))
    print_table("bpr_batch (fused loss + gradients)", bench_bpr(args.repeats))


if __name__ == "__main__":
    main()
