# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: block-CSR SpMV, ILU factorizations, sweeps.

Mirrors thermsim.kernels._core_py; keep the two in sync.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, sqrt

cnp.import_array()


def bsr_spmv(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
             double[:, :, ::1] data, double[::1] x, double[::1] y):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t b = data.shape[1]
    cdef Py_ssize_t i, k, r, c
    cdef cnp.int64_t ptr, col
    cdef double acc
    for i in range(n):
        for ptr in range(indptr[i], indptr[i + 1]):
            col = indices[ptr]
            for r in range(b):
                acc = 0.0
                for c in range(b):
                    acc += data[ptr, r, c] * x[col * b + c]
                y[i * b + r] += acc
    return np.asarray(y)


def ilu_factor_inplace(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                       double[::1] data, cnp.int64_t[::1] diag_pos):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i
    cdef cnp.int64_t ptr, up, k, j, lo, hi, t
    cdef double factor, dk
    cdef int shifts = 0
    # scatter map: column -> position in current row (-1 when absent)
    cdef cnp.int64_t[::1] posmap = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        for t in range(lo, hi):
            posmap[indices[t]] = t
        for ptr in range(lo, hi):
            k = indices[ptr]
            if k >= i:
                break
            dk = data[diag_pos[k]]
            if dk == 0.0:
                continue
            factor = data[ptr] / dk
            data[ptr] = factor
            for up in range(diag_pos[k] + 1, indptr[k + 1]):
                j = indices[up]
                t = posmap[j]
                if t >= 0:
                    data[t] -= factor * data[up]
        for t in range(lo, hi):
            posmap[indices[t]] = -1
        if data[diag_pos[i]] == 0.0:
            data[diag_pos[i]] = 1e-12
            shifts += 1
    return shifts


def lu_solve_csr(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                 double[::1] data, cnp.int64_t[::1] diag_pos,
                 double[::1] rhs, double[::1] out):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i
    cdef cnp.int64_t ptr
    cdef double s
    for i in range(n):
        s = rhs[i]
        for ptr in range(indptr[i], diag_pos[i]):
            s -= data[ptr] * out[indices[ptr]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for ptr in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[ptr] * out[indices[ptr]]
        out[i] = s / data[diag_pos[i]]
    return np.asarray(out)


def ilut_factor(cnp.int64_t[::1] indptr, cnp.int64_t[::1] indices,
                double[::1] data, int lfil, double droptol):
    """Saad ILUT(p, tol); returns split L/U CSR arrays plus shift count."""
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, m, t, cnt, kk
    cdef cnp.int64_t lo, hi, k, j, ptr
    cdef double norm, tau, piv, factor, diag, v

    cdef double[::1] w = np.zeros(n)
    cdef cnp.int64_t[::1] wpos = np.full(n, -1, dtype=np.int64)  # -1 absent
    cdef cnp.int64_t[::1] wcols = np.empty(n, dtype=np.int64)

    L_iptr = np.zeros(n + 1, dtype=np.int64)
    U_iptr = np.zeros(n + 1, dtype=np.int64)
    cdef list L_idx = []
    cdef list L_val = []
    cdef list U_idx = []
    cdef list U_val = []
    cdef cnp.int64_t[::1] L_iptr_v = L_iptr
    cdef cnp.int64_t[::1] U_iptr_v = U_iptr
    cdef double[::1] u_diag = np.zeros(n)
    cdef int shifts = 0

    import heapq

    for i in range(n):
        lo = indptr[i]
        hi = indptr[i + 1]
        norm = 0.0
        cnt = 0
        for ptr in range(lo, hi):
            j = indices[ptr]
            w[j] = data[ptr]
            wpos[j] = 1
            wcols[cnt] = j
            cnt += 1
            norm += data[ptr] * data[ptr]
        norm = sqrt(norm / (hi - lo)) if hi > lo else 0.0
        tau = droptol * norm

        heap = [int(indices[ptr]) for ptr in range(lo, hi) if indices[ptr] < i]
        heapq.heapify(heap)
        lrow_c = []
        lrow_v = []
        while heap:
            k = heapq.heappop(heap)
            if wpos[k] < 0:
                continue
            factor = w[k]
            wpos[k] = -1
            w[k] = 0.0
            piv = u_diag[k]
            if piv == 0.0:
                continue
            factor = factor / piv
            if fabs(factor) <= tau:
                continue
            lrow_c.append(int(k))
            lrow_v.append(factor)
            for t in range(U_iptr_v[k] + 1, U_iptr_v[k + 1]):
                j = <cnp.int64_t> U_idx[t]
                v = <double> U_val[t]
                if wpos[j] < 0:
                    w[j] = -factor * v
                    wpos[j] = 1
                    wcols[cnt] = j
                    cnt += 1
                    if j < i:
                        heapq.heappush(heap, int(j))
                else:
                    w[j] -= factor * v

        # gather upper part and diagonal
        diag = 0.0
        urow = []
        for m in range(cnt):
            j = wcols[m]
            if wpos[j] < 0:
                continue
            v = w[j]
            wpos[j] = -1
            w[j] = 0.0
            if j == i:
                diag = v
            elif j > i and fabs(v) > tau:
                urow.append((int(j), v))

        if len(lrow_c) > lfil:
            order = sorted(range(len(lrow_c)),
                           key=lambda q: -fabs(lrow_v[q]))[:lfil]
            order.sort()
            lrow_c = [lrow_c[q] for q in order]
            lrow_v = [lrow_v[q] for q in order]
        if len(urow) > lfil:
            urow.sort(key=lambda kv: -fabs(kv[1]))
            urow = urow[:lfil]
        urow.sort()

        if diag == 0.0:
            diag = 1e-12 if norm == 0.0 else max(tau, 1e-8 * norm)
            shifts += 1
        u_diag[i] = diag

        L_idx.extend(lrow_c)
        L_val.extend(lrow_v)
        L_iptr_v[i + 1] = L_iptr_v[i] + len(lrow_c)
        U_idx.append(int(i))
        U_val.append(diag)
        for j2, v2 in urow:
            U_idx.append(j2)
            U_val.append(v2)
        U_iptr_v[i + 1] = U_iptr_v[i] + 1 + len(urow)

    return (L_iptr, np.asarray(L_idx, dtype=np.int64), np.asarray(L_val),
            U_iptr, np.asarray(U_idx, dtype=np.int64), np.asarray(U_val),
            shifts)


def lu_solve_split(cnp.int64_t[::1] L_indptr, cnp.int64_t[::1] L_indices,
                   double[::1] L_data,
                   cnp.int64_t[::1] U_indptr, cnp.int64_t[::1] U_indices,
                   double[::1] U_data, double[::1] rhs, double[::1] out):
    cdef Py_ssize_t n = L_indptr.shape[0] - 1
    cdef Py_ssize_t i
    cdef cnp.int64_t ptr
    cdef double s
    for i in range(n):
        s = rhs[i]
        for ptr in range(L_indptr[i], L_indptr[i + 1]):
            s -= L_data[ptr] * out[L_indices[ptr]]
        out[i] = s
    for i in range(n - 1, -1, -1):
        s = out[i]
        for ptr in range(U_indptr[i] + 1, U_indptr[i + 1]):
            s -= U_data[ptr] * out[U_indices[ptr]]
        out[i] = s / U_data[U_indptr[i]]
    return np.asarray(out)
