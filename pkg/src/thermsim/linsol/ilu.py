"""Incomplete LU factorizations: level-of-fill ILU(k) and threshold ILUT.

Numeric work runs in the compiled kernels (or their NumPy twins); the
ILU(k) symbolic pattern is computed once per sparsity pattern and cached
by the caller.
"""

from __future__ import annotations

import heapq
import warnings

import numpy as np
import scipy.sparse as sp

from .. import kernels
from .blockmat import LinSolError


class ILUFactors:
    """Applied as z = (LU)^-1 r via forward/backward substitution."""

    def __init__(self, mode, arrays, shifts=0):
        self.mode = mode        # "pattern" | "split"
        self.arrays = arrays
        self.shifts = shifts

    @property
    def n(self):
        return len(self.arrays[0]) - 1

    def solve(self, r):
        out = np.zeros_like(r, dtype=float)
        if self.mode == "pattern":
            indptr, indices, data, diag_pos = self.arrays
            kernels.lu_solve_csr(indptr, indices, data, diag_pos,
                                 np.asarray(r, dtype=float), out)
        else:
            li, lj, lv, ui, uj, uv = self.arrays
            kernels.lu_solve_split(li, lj, lv, ui, uj, uv,
                                   np.asarray(r, dtype=float), out)
        return out


def iluk_symbolic(indptr, indices, level):
    """Level-of-fill pattern expansion; returns (indptr, indices, diag_pos).

    Entries of the original matrix have level 0; fill created through a
    pivot k gets level(i,k) + level(k,j) + 1 and survives when <= level.
    """
    n = len(indptr) - 1
    u_rows = []          # per-row list of (col, lev) with col >= row
    out_rows = []
    for i in range(n):
        lev = {int(j): 0 for j in indices[indptr[i]:indptr[i + 1]]}
        lev.setdefault(i, 0)
        heap = [c for c in lev if c < i]
        heapq.heapify(heap)
        seen = set(heap)
        while heap:
            k = heapq.heappop(heap)
            lik = lev[k]
            if lik > level:
                continue
            for j, lkj in u_rows[k]:
                if j == k:
                    continue
                new = lik + lkj + 1
                cur = lev.get(j)
                if cur is None:
                    if new <= level:
                        lev[j] = new
                        if j < i and j not in seen:
                            seen.add(j)
                            heapq.heappush(heap, j)
                elif new < cur:
                    lev[j] = new
        cols = sorted(c for c, l in lev.items() if l <= level)
        out_rows.append(cols)
        u_rows.append([(c, lev[c]) for c in cols if c >= i])

    iptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        iptr[i + 1] = iptr[i] + len(out_rows[i])
    idx = np.empty(iptr[-1], dtype=np.int64)
    diag_pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = out_rows[i]
        idx[iptr[i]:iptr[i + 1]] = row
        diag_pos[i] = iptr[i] + row.index(i)
    return iptr, idx, diag_pos


def _scatter_into_pattern(A_csr, iptr, idx):
    data = np.zeros(iptr[-1])
    n = len(iptr) - 1
    for i in range(n):
        a_lo, a_hi = A_csr.indptr[i], A_csr.indptr[i + 1]
        cols = A_csr.indices[a_lo:a_hi]
        pos = iptr[i] + np.searchsorted(idx[iptr[i]:iptr[i + 1]], cols)
        data[pos] = A_csr.data[a_lo:a_hi]
    return data


def ilu_factor(A, variant="ilut", k=1, p=None, tol=1e-4, symbolic=None):
    """Factor a CSR matrix; returns :class:`ILUFactors`.

    ``variant`` is "iluk" (level of fill ``k``) or "ilut" (keep ``p``
    largest per row above ``tol`` times the row norm).  A structurally or
    numerically zero pivot is shifted with a warning.  ``symbolic`` may
    carry a cached (indptr, indices, diag_pos) triple for iluk.
    """
    A = sp.csr_matrix(A)
    A.sort_indices()
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise LinSolError("ILU needs a square matrix")
    if variant == "iluk":
        if symbolic is None:
            symbolic = iluk_symbolic(A.indptr, A.indices, k)
        iptr, idx, diag_pos = symbolic
        data = _scatter_into_pattern(A, iptr, idx)
        shifts = kernels.ilu_factor_inplace(iptr, idx, data, diag_pos)
        if shifts:
            warnings.warn(f"ILU({k}): {shifts} zero pivots shifted")
        return ILUFactors("pattern", (iptr, idx, data, diag_pos), shifts)
    if variant == "ilut":
        if p is None:
            p = max(int(np.diff(A.indptr).max()) * 2, 10)
        res = kernels.ilut_factor(A.indptr.astype(np.int64),
                                  A.indices.astype(np.int64),
                                  A.data.astype(float), int(p), float(tol))
        li, lj, lv, ui, uj, uv, shifts = res
        if shifts:
            warnings.warn(f"ILUT: {shifts} zero pivots shifted")
        return ILUFactors("split", (li, lj, lv, ui, uj, uv), shifts)
    raise LinSolError(f"unknown ILU variant {variant!r}")
