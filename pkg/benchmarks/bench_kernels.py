#!/usr/bin/env python3
"""Benchmark the compiled kernels against their NumPy fallbacks.

Times the three hot operations on a system representative of an implicit
thermal step: block SpMV, ILUT factorization, and triangular sweeps.

    python3 benchmarks/bench_kernels.py [n_cells] [block_size]
"""

import sys
import time

import numpy as np
import scipy.sparse as sp

import thermsim.kernels as K
from thermsim.kernels import _core_py as pure


def seven_point_block_system(n_side, b, rng):
    n = n_side ** 3
    cell = np.arange(n).reshape(n_side, n_side, n_side)
    pairs = []
    for axis in range(3):
        a = np.moveaxis(cell, axis, 0)[:-1].reshape(-1)
        bb = np.moveaxis(cell, axis, 0)[1:].reshape(-1)
        pairs.append((a, bb))
    ca = np.concatenate([p[0] for p in pairs])
    cb = np.concatenate([p[1] for p in pairs])
    rows = np.concatenate([np.arange(n), ca, cb])
    cols = np.concatenate([np.arange(n), cb, ca])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    data = 0.1 * rng.standard_normal((len(rows), b, b))
    data[rows == cols] += (6.0 + rng.random()) * np.eye(b)
    return n, indptr, cols.astype(np.int64), data


def timeit(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    n_side = int(sys.argv[1]) if len(sys.argv) > 1 else 12
    b = int(sys.argv[2]) if len(sys.argv) > 2 else 4
    rng = np.random.default_rng(0)
    n, indptr, indices, data = seven_point_block_system(n_side, b, rng)
    print(f"backend available: {K.BACKEND}; system: {n} cells, "
          f"block {b} ({n * b} unknowns)")
    if K.BACKEND != "compiled":
        print("compiled extension not built; timing the fallback only")

    x = rng.standard_normal(n * b)

    rows = []

    def bench(name, fast, slow):
        t_fast = timeit(fast)
        t_slow = timeit(slow)
        rows.append((name, t_fast, t_slow))

    y1 = np.zeros(n * b)
    y2 = np.zeros(n * b)
    bench("block spmv",
          lambda: K.bsr_spmv(indptr, indices, data, x, y1),
          lambda: pure.bsr_spmv(indptr, indices, data, x, y2))

    csr = sp.bsr_matrix((data, indices, indptr)).tocsr()
    csr.sort_indices()
    args = (csr.indptr.astype(np.int64), csr.indices.astype(np.int64))

    fac = {}

    def run_ilut(mod, tag):
        fac[tag] = mod.ilut_factor(args[0], args[1], csr.data.astype(float),
                                   2 * b * 7, 1e-4)

    bench("ilut factor",
          lambda: run_ilut(K, "fast"),
          lambda: run_ilut(pure, "slow"))

    r = rng.standard_normal(n * b)
    z = np.zeros(n * b)
    bench("lu sweeps",
          lambda: K.lu_solve_split(*fac["fast"][:6], r, z),
          lambda: pure.lu_solve_split(*fac["slow"][:6], r, z))

    print(f"{'kernel':<14} {'compiled (s)':>14} {'fallback (s)':>14} {'speedup':>9}")
    for name, tf, ts in rows:
        print(f"{name:<14} {tf:>14.6f} {ts:>14.6f} {ts / tf:>8.1f}x")


if __name__ == "__main__":
    main()
