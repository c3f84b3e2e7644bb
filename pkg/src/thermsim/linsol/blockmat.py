"""Block-CSR matrix with trailing scalar well rows/columns.

Reservoir unknowns are stored as uniform b x b blocks per cell pair in
CSR layout; the well bottom-hole-pressure unknowns append as dense scalar
borders (their count is tiny at any scale this package targets).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..kernels import bsr_spmv


class LinSolError(Exception):
    pass


@dataclass
class BlockMatrix:
    n: int                  # block rows
    b: int                  # block size
    indptr: np.ndarray      # (n+1,) int64
    indices: np.ndarray     # (nnzb,) int64, sorted per row, diagonal present
    data: np.ndarray        # (nnzb, b, b)
    wb: np.ndarray          # (n, b, nw) cell-equation coupling to wells
    bw: np.ndarray          # (nw, n, b) well-equation coupling to cells
    ww: np.ndarray          # (nw, nw)

    @property
    def nwell(self):
        return self.ww.shape[0]

    @property
    def nscalar(self):
        return self.n * self.b + self.nwell

    @classmethod
    def empty(cls, n, b, indptr, indices, nwell=0):
        nnzb = len(indices)
        return cls(n, b, indptr.astype(np.int64), indices.astype(np.int64),
                   np.zeros((nnzb, b, b)),
                   np.zeros((n, b, nwell)),
                   np.zeros((nwell, n, b)),
                   np.zeros((nwell, nwell)))

    def copy(self):
        return BlockMatrix(self.n, self.b, self.indptr, self.indices,
                           self.data.copy(), self.wb.copy(),
                           self.bw.copy(), self.ww.copy())

    def diag_positions(self):
        """Positions of diagonal blocks in the data array."""
        pos = np.empty(self.n, dtype=np.int64)
        for i in range(self.n):
            row = self.indices[self.indptr[i]:self.indptr[i + 1]]
            k = np.searchsorted(row, i)
            if k >= len(row) or row[k] != i:
                raise LinSolError(f"missing diagonal block in row {i}")
            pos[i] = self.indptr[i] + k
        return pos

    def spmv(self, x):
        """y = A x over the full scalar dimension."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nscalar,):
            raise LinSolError(
                f"dimension mismatch: {x.shape} vs {self.nscalar}")
        nb = self.n * self.b
        xc, xw = x[:nb], x[nb:]
        y = np.zeros(self.nscalar)
        bsr_spmv(self.indptr, self.indices, self.data, xc, y[:nb])
        if self.nwell:
            y[:nb] += np.einsum("nbw,w->nb", self.wb, xw).reshape(-1)
            y[nb:] = np.einsum("wnb,nb->w", self.bw,
                               xc.reshape(self.n, self.b)) + self.ww @ xw
        return y

    def to_csr(self):
        """Assemble the full scalar CSR matrix."""
        bsr = sp.bsr_matrix((self.data, self.indices, self.indptr),
                            shape=(self.n * self.b, self.n * self.b))
        if not self.nwell:
            return bsr.tocsr()
        nw = self.nwell
        wb = sp.csr_matrix(self.wb.reshape(self.n * self.b, nw))
        bw = sp.csr_matrix(self.bw.reshape(nw, self.n * self.b))
        ww = sp.csr_matrix(self.ww)
        return sp.bmat([[bsr, wb], [bw, ww]], format="csr")


def dump_matrix(A, rhs, path):
    """Write (A, rhs) in a coordinate text format for solver regressions."""
    csr = A.to_csr() if isinstance(A, BlockMatrix) else sp.csr_matrix(A)
    coo = csr.tocoo()
    with open(path, "w") as fh:
        fh.write(f"# thermsim coo matrix\n{coo.shape[0]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {float(v)!r}\n")
        fh.write("rhs\n")
        for v in np.asarray(rhs):
            fh.write(f"{float(v)!r}\n")


def load_matrix(path):
    """Read a matrix/rhs pair written by :func:`dump_matrix`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    n, nnz = (int(t) for t in lines[0].split())
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    for k in range(nnz):
        i, j, v = lines[1 + k].split()
        rows[k], cols[k], vals[k] = int(i), int(j), float(v)
    assert lines[1 + nnz] == "rhs"
    rhs = np.array([float(t) for t in lines[2 + nnz:]])
    if len(rhs) != n:
        raise LinSolError("rhs length mismatch in matrix file")
    A = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return A, rhs


def block_pattern_from_faces(n, cell_a, cell_b):
    """Block-CSR pattern for diagonal plus symmetric face couplings.

    Returns (indptr, indices, diag_pos, pos_ab, pos_ba) where pos_ab[f]
    is the data slot of block (cell_a[f], cell_b[f]).
    """
    rows = np.concatenate([np.arange(n), cell_a, cell_b])
    cols = np.concatenate([np.arange(n), cell_b, cell_a])
    order = np.lexsort((cols, rows))
    rs, cs = rows[order], cols[order]
    # pattern is duplicate-free: one face per ordered pair
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rs + 1, 1)
    indptr = np.cumsum(indptr)
    indices = cs.astype(np.int64)
    slot_of = np.empty(len(order), dtype=np.int64)
    slot_of[order] = np.arange(len(order))
    diag_pos = slot_of[:n]
    nf = len(cell_a)
    pos_ab = slot_of[n:n + nf]
    pos_ba = slot_of[n + nf:]
    return indptr, indices, diag_pos, pos_ab, pos_ba
