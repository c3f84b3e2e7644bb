"""Restricted additive Schwarz preconditioner.

Rows are grouped into subdomains (from the grid partition at desk scale,
so behavior is independent of execution parallelism); each subdomain
solves its overlap-extended local problem with an ILU variant and writes
only its owned rows back.  Overlap 0 degenerates to block Jacobi.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .blockmat import LinSolError
from .ilu import ilu_factor


class RASPreconditioner:
    def __init__(self, A_csr, owner, overlap=1, local_solver="ilut",
                 iluk_level=1, ilut_p=None, ilut_tol=1e-4, symbolic_cache=None):
        A = sp.csr_matrix(A_csr)
        A.sort_indices()
        n = A.shape[0]
        owner = np.asarray(owner)
        if owner.shape != (n,):
            raise LinSolError("owner array must give a part id per row")
        self.n = n
        nparts = int(owner.max()) + 1
        self.subdomains = []
        cache = symbolic_cache if symbolic_cache is not None else {}
        for p in range(nparts):
            owned = np.flatnonzero(owner == p)
            if len(owned) == 0:
                continue
            rows = _expand_overlap(A, owned, overlap)
            local = A[rows][:, rows].tocsr()
            key = (p, overlap, local_solver, iluk_level)
            sym = cache.get(key)
            fac = ilu_factor(local, variant=local_solver, k=iluk_level,
                             p=ilut_p, tol=ilut_tol, symbolic=sym)
            if local_solver == "iluk" and sym is None:
                cache[key] = fac.arrays[0], fac.arrays[1], fac.arrays[3]
            owned_local = np.searchsorted(rows, owned)
            self.subdomains.append((rows, owned, owned_local, fac))
        self.symbolic_cache = cache

    def apply(self, r):
        r = np.asarray(r, dtype=float)
        z = np.zeros_like(r)
        for rows, owned, owned_local, fac in self.subdomains:
            z_local = fac.solve(r[rows])
            z[owned] = z_local[owned_local]
        return z


def _expand_overlap(A, owned, overlap):
    mask = np.zeros(A.shape[0], dtype=bool)
    mask[owned] = True
    for _ in range(overlap):
        rows = np.flatnonzero(mask)
        start = A.indptr[rows]
        end = A.indptr[rows + 1]
        cols = np.concatenate([A.indices[s:e] for s, e in zip(start, end)]) \
            if len(rows) else np.empty(0, dtype=A.indices.dtype)
        mask[cols] = True
    return np.flatnonzero(mask)
