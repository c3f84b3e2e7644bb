"""Matrix decoupling operators applied before CPR-type preconditioning.

All methods left-multiply each reservoir block row (including its well
columns and right-hand side) by a per-block operator; trailing well rows
are left untouched.  Two-stage combinations run the row-sum stage first.
"""

from __future__ import annotations

import numpy as np

from .blockmat import BlockMatrix, LinSolError

DECOUPLE_METHODS = ("NONE", "ABF", "GJE", "FRS", "DRS",
                    "FRS+ABF", "FRS+GJE", "DRS+ABF", "DRS+GJE")

DRS_THRESHOLD = 0.25


def _row_counts(A):
    return np.diff(A.indptr)


def _apply_block_operator(A, rc, solve_rows):
    """Left-multiply each block row i by an operator given as a callable
    mapping (diag_blocks, stacked_rhs) -> transformed stacked rhs."""
    counts = _row_counts(A)
    rows = np.repeat(np.arange(A.n), counts)
    diag_pos = A.diag_positions()
    diags = A.data[diag_pos]

    out = A.copy()
    out.data = solve_rows(diags[rows], A.data)
    if A.nwell:
        out.wb = solve_rows(diags, A.wb)
    rc2 = solve_rows(diags, rc[:, :, None])[:, :, 0]
    return out, rc2


def _abf(A, rc):
    """Block-diagonal inverse scaling: D = diag(A_11 .. A_nn)."""

    def solve_rows(diags, rhs):
        try:
            inv = np.linalg.inv(diags)
        except np.linalg.LinAlgError:
            raise LinSolError("ABF: singular diagonal block") from None
        return np.einsum("kij,kjm->kim", inv, rhs)

    return _apply_block_operator(A, rc, solve_rows)


def _gje(A, rc):
    """Per-block Gauss-Jordan with partial pivoting (LAPACK solve)."""

    def solve_rows(diags, rhs):
        try:
            return np.linalg.solve(diags, rhs)
        except np.linalg.LinAlgError:
            raise LinSolError("GJE: singular diagonal block") from None

    return _apply_block_operator(A, rc, solve_rows)


def _row_sum(A, rc, mask_rows):
    """Add selected scalar rows of each block row to its first row.

    ``mask_rows`` is (n, b) boolean; the first row is always included.
    The left operator is the unit matrix whose first row holds the mask.
    """
    out = A.copy()
    counts = _row_counts(A)
    rows = np.repeat(np.arange(A.n), counts)
    m = mask_rows.astype(float)
    m[:, 0] = 1.0
    # plain masked sums keep the reduction order identical to np.sum so the
    # first-row postcondition holds exactly, not just to rounding
    out.data = A.data.copy()
    out.data[:, 0, :] = (A.data * m[rows][:, :, None]).sum(axis=1)
    if A.nwell:
        out.wb = A.wb.copy()
        out.wb[:, 0, :] = (A.wb * m[:, :, None]).sum(axis=1)
    rc2 = rc.copy()
    rc2[:, 0] = (rc * m).sum(axis=1)
    return out, rc2


def _frs(A, rc):
    mask = np.ones((A.n, A.b), dtype=bool)
    return _row_sum(A, rc, mask)


def _drs(A, rc):
    """Dynamic row sum: include rows with significant pressure coupling.

    A scalar row joins the sum when its pressure-column magnitude in the
    diagonal block reaches DRS_THRESHOLD of the block's maximum.
    """
    diag_pos = A.diag_positions()
    pcol = np.abs(A.data[diag_pos][:, :, 0])      # (n, b)
    ref = pcol.max(axis=1, keepdims=True)
    mask = pcol >= DRS_THRESHOLD * np.where(ref > 0, ref, 1.0)
    return _row_sum(A, rc, mask)


_STAGES = {"ABF": _abf, "GJE": _gje, "FRS": _frs, "DRS": _drs}


def decouple(A, rc, rw, method):
    """Return (A~, rc~, rw~) for the named decoupling method.

    ``rc`` is the (n, b) cell residual, ``rw`` the well residual; well
    rows pass through unchanged.
    """
    if method not in DECOUPLE_METHODS:
        raise LinSolError(f"unknown decoupling method {method!r}")
    if method == "NONE":
        return A, rc, rw
    out_A, out_rc = A, rc
    for stage in method.split("+"):
        out_A, out_rc = _STAGES[stage](out_A, out_rc)
    return out_A, out_rc, rw


def decouple_csr(A_csr, b, block_size, method):
    """Decouple a plain square CSR system of uniform blocks (test helper).

    Converts to BlockMatrix with no well rows, applies ``method``, and
    returns dense-compatible (A~, b~).
    """
    import scipy.sparse as sp

    n_scalar = A_csr.shape[0]
    n = n_scalar // block_size
    bsr = sp.bsr_matrix(A_csr, blocksize=(block_size, block_size))
    bm = BlockMatrix(n, block_size, bsr.indptr.astype(np.int64),
                     bsr.indices.astype(np.int64), np.array(bsr.data),
                     np.zeros((n, block_size, 0)),
                     np.zeros((0, n, block_size)), np.zeros((0, 0)))
    rc = np.asarray(b, dtype=float).reshape(n, block_size)
    out, rc2, _ = decouple(bm, rc, np.zeros(0), method)
    return out.to_csr(), rc2.reshape(-1)
