"""Pure-Python/NumPy twins of the compiled kernels.

Same call signatures and semantics as ``thermsim.kernels._core``; used
when the extension is not built or when ``THERMSIM_FORCE_PY`` is set.
"""

import numpy as np


def bsr_spmv(indptr, indices, data, x, y):
    """y += A x for a block-CSR matrix with (nnzb, b, b) blocks."""
    n = len(indptr) - 1
    b = data.shape[1]
    xb = x.reshape(n, b)
    yb = y.reshape(n, b)
    counts = np.diff(indptr)
    rows = np.repeat(np.arange(n), counts)
    contrib = np.einsum("kij,kj->ki", data, xb[indices])
    np.add.at(yb, rows, contrib)
    return y


def ilu_factor_inplace(indptr, indices, data, diag_pos):
    """IKJ ILU factorization restricted to the existing CSR pattern.

    ``data`` is overwritten with the combined factors: strict lower part
    holds L (unit diagonal implied), diagonal and upper hold U.  Column
    indices must be sorted in every row.  A structural/numerical zero
    pivot is replaced by a small shift; the number of shifts is returned.
    """
    n = len(indptr) - 1
    shifts = 0
    # column -> position map per processed row, rebuilt as needed
    for i in range(n):
        row_start, row_end = indptr[i], indptr[i + 1]
        cols_i = indices[row_start:row_end]
        pos_i = {int(c): row_start + t for t, c in enumerate(cols_i)}
        for ptr in range(row_start, row_end):
            k = indices[ptr]
            if k >= i:
                break
            dk = data[diag_pos[k]]
            if dk == 0.0:
                continue
            factor = data[ptr] / dk
            data[ptr] = factor
            # subtract factor * U(k, j) for j > k
            for up in range(diag_pos[k] + 1, indptr[k + 1]):
                j = indices[up]
                tgt = pos_i.get(int(j))
                if tgt is not None:
                    data[tgt] -= factor * data[up]
        dpos = diag_pos[i]
        if data[dpos] == 0.0:
            data[dpos] = 1e-12
            shifts += 1
    return shifts


def lu_solve_csr(indptr, indices, data, diag_pos, rhs, out):
    """Solve LUx = rhs with combined factors from ilu_factor_inplace."""
    n = len(indptr) - 1
    out[:] = rhs
    for i in range(n):
        s = out[i]
        for ptr in range(indptr[i], diag_pos[i]):
            s -= data[ptr] * out[indices[ptr]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for ptr in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[ptr] * out[indices[ptr]]
        out[i] = s / data[diag_pos[i]]
    return out


def ilut_factor(indptr, indices, data, lfil, droptol):
    """Saad-style ILUT(p, tol) factorization of a CSR matrix.

    Returns (L_indptr, L_indices, L_data, U_indptr, U_indices, U_data)
    where L is strictly lower with unit diagonal implied and U carries the
    diagonal first in each row.  Dropping: entries below droptol times the
    row norm are discarded; at most ``lfil`` kept per row in each factor.
    """
    import heapq

    n = len(indptr) - 1
    L_rows_idx, L_rows_val = [], []
    U_rows_idx, U_rows_val = [], []
    u_diag = np.zeros(n)
    shifts = 0

    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        cols = indices[lo:hi]
        vals = data[lo:hi]
        norm = np.sqrt(np.mean(vals * vals)) if hi > lo else 0.0
        tau = droptol * norm
        w = dict(zip(cols.tolist(), vals.tolist()))
        lvals = {}

        # eliminate lower entries (including fill) in ascending column order
        heap = [c for c in w if c < i]
        heapq.heapify(heap)
        seen = set(heap)
        while heap:
            k = heapq.heappop(heap)
            wk = w.pop(k, 0.0)
            piv = u_diag[k]
            if piv == 0.0:
                continue
            factor = wk / piv
            if abs(factor) <= tau:
                continue
            lvals[k] = factor
            uk_idx = U_rows_idx[k]
            uk_val = U_rows_val[k]
            for t in range(1, len(uk_idx)):  # skip the diagonal entry
                j = uk_idx[t]
                w[j] = w.get(j, 0.0) - factor * uk_val[t]
                if j < i and j not in seen:
                    seen.add(j)
                    heapq.heappush(heap, j)

        # split, drop small entries, keep the lfil largest per factor
        l_items = sorted(lvals.items())
        if len(l_items) > lfil:
            l_items.sort(key=lambda kv: -abs(kv[1]))
            l_items = sorted(l_items[:lfil])
        diag = w.pop(i, 0.0)
        u_items = [(k, v) for k, v in w.items() if k > i and abs(v) > tau]
        if len(u_items) > lfil:
            u_items.sort(key=lambda kv: -abs(kv[1]))
            u_items = u_items[:lfil]
        u_items.sort()
        if diag == 0.0:
            diag = 1e-12 if norm == 0.0 else max(tau, 1e-8 * norm)
            shifts += 1
        u_diag[i] = diag

        L_rows_idx.append([k for k, _ in l_items])
        L_rows_val.append([v for _, v in l_items])
        U_rows_idx.append([i] + [k for k, _ in u_items])
        U_rows_val.append([diag] + [v for _, v in u_items])

    def _pack(rows_idx, rows_val):
        iptr = np.zeros(n + 1, dtype=np.int64)
        for i in range(n):
            iptr[i + 1] = iptr[i] + len(rows_idx[i])
        idx = np.empty(iptr[-1], dtype=np.int64)
        val = np.empty(iptr[-1])
        for i in range(n):
            idx[iptr[i]:iptr[i + 1]] = rows_idx[i]
            val[iptr[i]:iptr[i + 1]] = rows_val[i]
        return iptr, idx, val

    L = _pack(L_rows_idx, L_rows_val)
    U = _pack(U_rows_idx, U_rows_val)
    return L + U + (shifts,)


def lu_solve_split(L_indptr, L_indices, L_data,
                   U_indptr, U_indices, U_data, rhs, out):
    """Solve with split L (unit lower) / U (diag-first rows) factors."""
    n = len(L_indptr) - 1
    out[:] = rhs
    for i in range(n):
        s = out[i]
        for ptr in range(L_indptr[i], L_indptr[i + 1]):
            s -= L_data[ptr] * out[L_indices[ptr]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        diag = U_data[U_indptr[i]]
        for ptr in range(U_indptr[i] + 1, U_indptr[i + 1]):
            s -= U_data[ptr] * out[U_indices[ptr]]
        out[i] = s / diag
    return out
