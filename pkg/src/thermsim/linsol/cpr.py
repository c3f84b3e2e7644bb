"""CPR-type preconditioners: FP, PF and FPF compositions.

Stage F applies restricted additive Schwarz to the full system; stage P
restricts the current residual to the pressure unknowns, applies one AMG
V-cycle to the extracted pressure block, and prolongs the correction
back.  Stages compose multiplicatively with a residual refresh between
them; decoupling is expected to have been applied to the system first.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .amg import AMGSolver
from .blockmat import BlockMatrix, LinSolError
from .ras import RASPreconditioner


def extract_pressure_block(A):
    """Pressure sub-matrix App (cells only) from a BlockMatrix."""
    if not isinstance(A, BlockMatrix):
        raise LinSolError("pressure extraction needs a BlockMatrix")
    app = sp.csr_matrix(
        (A.data[:, 0, 0], A.indices, A.indptr), shape=(A.n, A.n))
    app.eliminate_zeros()
    return app


class CPRPreconditioner:
    """kind in {"ras", "cpr-fp", "cpr-pf", "cpr-fpf"}."""

    def __init__(self, A_block, kind="cpr-fpf", owner=None, overlap=1,
                 local_solver="ilut", iluk_level=1, ilut_p=None,
                 ilut_tol=1e-4, amg_params=None, symbolic_cache=None):
        kind = kind.lower()
        if kind not in ("ras", "cpr-fp", "cpr-pf", "cpr-fpf"):
            raise LinSolError(f"unknown preconditioner kind {kind!r}")
        self.kind = kind
        self.A = A_block
        self.csr = A_block.to_csr()
        n_scalar = self.csr.shape[0]
        if owner is None:
            owner = np.zeros(n_scalar, dtype=np.int64)
        self.ras = RASPreconditioner(
            self.csr, owner, overlap=overlap, local_solver=local_solver,
            iluk_level=iluk_level, ilut_p=ilut_p, ilut_tol=ilut_tol,
            symbolic_cache=symbolic_cache)
        self.symbolic_cache = self.ras.symbolic_cache
        if kind != "ras":
            app = extract_pressure_block(A_block)
            self.amg = AMGSolver(app, **(amg_params or {}))
            self.p_rows = np.arange(A_block.n) * A_block.b
        else:
            self.amg = None

    def _pressure_correction(self, resid):
        zp = self.amg.apply(resid[self.p_rows])
        z = np.zeros_like(resid)
        z[self.p_rows] = zp
        return z

    def apply(self, f):
        f = np.asarray(f, dtype=float)
        if not np.any(f):
            return np.zeros_like(f)
        if self.kind == "ras":
            return self.ras.apply(f)
        stages = {"cpr-fp": "FP", "cpr-pf": "PF", "cpr-fpf": "FPF"}[self.kind]
        y = np.zeros_like(f)
        resid = f
        for stage in stages:
            if stage == "F":
                y = y + self.ras.apply(resid)
            else:
                y = y + self._pressure_correction(resid)
            resid = f - self.csr @ y
        return y
