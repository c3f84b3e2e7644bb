"""Classical (Ruge-Stuben style) algebraic multigrid for the pressure block.

Serial strength-based coarsening with direct interpolation, forward
Gauss-Seidel smoothing (the serial specialization of hybrid GS) and a
dense coarsest solve.  Defaults follow the simulator's AMG parameter set:
one V-cycle per application, strength threshold 0.5, max row sum 0.9,
two relaxation sweeps.  If coarsening stagnates the solver falls back to
an ILU factorization with a warning.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.sparse as sp

from .ilu import ilu_factor


class AMGSolver:
    def __init__(self, A, strength=0.5, max_row_sum=0.9, max_levels=20,
                 coarse_size=40, sweeps=2):
        A = sp.csr_matrix(A)
        A.sort_indices()
        self.sweeps = sweeps
        self.levels = []
        self.fallback = None
        while A.shape[0] > coarse_size and len(self.levels) < max_levels:
            P = _interpolation(A, strength, max_row_sum)
            if P is None or P.shape[1] >= A.shape[0] or P.shape[1] == 0:
                break
            R = P.T.tocsr()
            Ac = (R @ A @ P).tocsr()
            dac = np.abs(Ac.diagonal())
            if (not np.all(np.isfinite(Ac.data)) or dac.min() <= 1e-12 *
                    max(dac.max(), 1.0)):
                break  # degenerate coarse operator: stop coarsening here
            smooth = _GaussSeidel(A)
            self.levels.append((A, smooth, P, R))
            A = Ac
        if A.shape[0] > 8 * coarse_size:
            # coarsening stagnated far from the direct-solve regime
            warnings.warn("AMG coarsening stagnated; falling back to ILU")
            self._coarse = ilu_factor(A, variant="ilut", tol=1e-5,
                                      p=int(np.diff(A.indptr).max()) * 4)
        else:
            self._coarse = _DenseSolve(A)

    def apply(self, r):
        """One V-cycle (the configured maxit) starting from zero."""
        r = np.asarray(r, dtype=float)
        if not np.any(r):
            return np.zeros_like(r)
        if not self.levels:
            z = self._coarse.solve(r)
        else:
            z = self._cycle(0, r)
        if not np.all(np.isfinite(z)):
            # degenerate cycle: fall back to diagonal scaling for this apply
            A0 = self.levels[0][0] if self.levels else None
            diag = A0.diagonal() if A0 is not None else np.ones_like(r)
            diag = np.where(np.abs(diag) > 1e-300, diag, 1.0)
            z = r / diag
        return z

    def _cycle(self, lev, b):
        A, smooth, P, R = self.levels[lev]
        x = smooth.sweep(b, np.zeros_like(b), self.sweeps)
        resid = b - A @ x
        bc = R @ resid
        if lev + 1 < len(self.levels):
            xc = self._cycle(lev + 1, bc)
        else:
            xc = self._coarse.solve(bc)
        x = x + P @ xc
        x = smooth.sweep(b, x, self.sweeps)
        return x


class _DenseSolve:
    def __init__(self, A):
        import scipy.linalg as la

        dense = A.toarray()
        lu, piv = la.lu_factor(dense, check_finite=False)
        if not np.all(np.isfinite(lu)) or np.any(
                np.abs(np.diag(lu)) < 1e-14 * max(np.abs(lu).max(), 1.0)):
            shift = 1e-12 * max(np.abs(dense).max(), 1.0)
            lu, piv = la.lu_factor(dense + shift * np.eye(len(dense)),
                                   check_finite=False)
        self.lu = (lu, piv)

    def solve(self, b):
        import scipy.linalg as la

        return la.lu_solve(self.lu, b, check_finite=False)


class _GaussSeidel:
    """Forward Gauss-Seidel sweeps via triangular solves."""

    def __init__(self, A):
        self.A = A
        lower = sp.tril(A, k=0).tolil()
        diag = A.diagonal()
        bad = np.abs(diag) < 1e-300
        if np.any(bad):   # keep the sweep well defined on degenerate rows
            for i in np.flatnonzero(bad):
                lower[i, i] = 1.0
        self.lower = lower.tocsr()
        self.upper = sp.triu(A, k=1).tocsr()

    def sweep(self, b, x, count):
        from scipy.sparse.linalg import spsolve_triangular

        for _ in range(count):
            x = spsolve_triangular(self.lower, b - self.upper @ x,
                                   lower=True, unit_diagonal=False)
        return x


def _strength_graph(A, theta, max_row_sum):
    """Classical strength: -a_ij >= theta * max_k(-a_ik); boolean CSR mask.

    Rows whose off-diagonal entries nearly cancel the diagonal (signed row
    sum above ``max_row_sum`` of the absolute sum) are treated as having
    no strong connections; smoothing alone handles them.
    """
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    strong = np.zeros_like(data, dtype=bool)
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        off = cols != i
        if not np.any(off):
            continue
        diag = vals[~off].sum() if np.any(~off) else 1.0
        if diag == 0.0:
            continue
        abs_sum = np.abs(vals).sum()
        if abs_sum > 0 and abs(vals.sum()) > max_row_sum * abs_sum:
            continue
        # diagonal-normalized couplings: elliptic rows have ratio > 0
        ratio = -vals[off] / diag
        mx = ratio.max()
        if mx <= 0:
            continue
        keep = np.zeros(hi - lo, dtype=bool)
        keep[off] = ratio >= theta * mx
        strong[lo:hi] = keep
    return strong


def _interpolation(A, theta, max_row_sum):
    """Ruge-Stuben first-pass splitting plus direct interpolation."""
    n = A.shape[0]
    indptr, indices, data = A.indptr, A.indices, A.data
    strong = _strength_graph(A, theta, max_row_sum)

    # transpose-strength counts as the initial measure
    measure = np.zeros(n, dtype=np.int64)
    np.add.at(measure, indices[strong], 1)

    UNDECIDED, CPT, FPT = 0, 1, 2
    state = np.full(n, UNDECIDED, dtype=np.int8)
    order = np.argsort(-measure, kind="stable")
    # greedy first pass: highest measure becomes C, strong dependents F
    rows_of = [indices[indptr[i]:indptr[i + 1]][strong[indptr[i]:indptr[i + 1]]]
               for i in range(n)]
    dependents = [[] for _ in range(n)]
    for i in range(n):
        for j in rows_of[i]:
            dependents[j].append(i)
    has_strong = np.array([len(rows_of[i]) > 0 for i in range(n)])
    for i in order:
        if state[i] != UNDECIDED:
            continue
        if measure[i] == 0 and not has_strong[i]:
            state[i] = FPT   # isolated row: smoothing alone handles it
            continue
        state[i] = CPT
        for dep in dependents[i]:
            if state[dep] == UNDECIDED:
                state[dep] = FPT
    state[state == UNDECIDED] = FPT
    cpts = np.flatnonzero(state == CPT)
    if len(cpts) == 0:
        return None
    coarse_id = -np.ones(n, dtype=np.int64)
    coarse_id[cpts] = np.arange(len(cpts))

    rows, cols, vals = [], [], []
    for i in range(n):
        if state[i] == CPT:
            rows.append(i)
            cols.append(coarse_id[i])
            vals.append(1.0)
            continue
        lo, hi = indptr[i], indptr[i + 1]
        ccols = [(j, v) for j, v, s in zip(indices[lo:hi], data[lo:hi],
                                           strong[lo:hi])
                 if s and state[j] == CPT]
        diag = 0.0
        other = 0.0
        cset = {j for j, _ in ccols}
        for j, v in zip(indices[lo:hi], data[lo:hi]):
            if j == i:
                diag = v
            elif j not in cset:
                other += v  # lump weak and strong-F couplings
        denom = diag + other
        if not ccols or denom == 0.0:
            continue  # isolated fine point: relies on smoothing only
        for j, v in ccols:
            rows.append(i)
            cols.append(coarse_id[j])
            vals.append(-v / denom)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, len(cpts)))
    return P
