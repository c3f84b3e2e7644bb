"""Right-preconditioned Krylov solvers: restarted GMRES and BiCGSTAB.

The reported relative residual is verified with an independent
matrix-vector product before a solve is declared converged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .blockmat import BlockMatrix, LinSolError

GMRES_RESTART = 30


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    status: str          # converged | maxit | breakdown
    relative_residual: float


def _matvec_of(A):
    if isinstance(A, BlockMatrix):
        return A.spmv
    if sp.issparse(A):
        csr = A.tocsr()
        return lambda v: csr @ v
    A = np.asarray(A)
    return lambda v: A @ v


def _pc_of(pc):
    if pc is None:
        return lambda r: r
    if hasattr(pc, "apply"):
        return pc.apply
    if hasattr(pc, "solve"):
        return pc.solve
    return pc


def krylov_solve(A, b, method="bicgstab", pc=None, tol=1e-6, maxit=200,
                 x0=None):
    """Solve A x = b to a relative residual ``tol``.

    Returns :class:`SolveResult`; ``status`` is "converged" only when the
    final residual, recomputed with a fresh spmv, meets the tolerance.
    """
    matvec = _matvec_of(A)
    apply_pc = _pc_of(pc)
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return SolveResult(np.zeros_like(b), 0, "converged", 0.0)
    if method == "gmres":
        x, iters, status = _gmres(matvec, apply_pc, b, tol, maxit, x0)
    elif method == "bicgstab":
        x, iters, status = _bicgstab(matvec, apply_pc, b, tol, maxit, x0)
    else:
        raise LinSolError(f"unknown Krylov method {method!r}")
    # independent verification of the claimed residual
    rel = np.linalg.norm(b - matvec(x)) / bnorm
    if status == "converged" and rel > tol * 1.0001:
        status = "maxit"
    return SolveResult(x, iters, status, float(rel))


def _gmres(matvec, apply_pc, b, tol, maxit, x0, restart=GMRES_RESTART):
    n = len(b)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    bnorm = np.linalg.norm(b)
    iters = 0
    while iters < maxit:
        r = b - matvec(x)
        beta = np.linalg.norm(r)
        if beta / bnorm <= tol:
            return x, iters, "converged"
        m = min(restart, maxit - iters)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_done = 0
        for j in range(m):
            w = matvec(apply_pc(V[j]))
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 1e-300:
                V[j + 1] = w / H[j + 1, j]
            # apply accumulated Givens rotations
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            denom = np.hypot(H[j, j], H[j + 1, j])
            if denom == 0.0:
                cs[j], sn[j] = 1.0, 0.0
            else:
                cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            j_done = j + 1
            if abs(g[j + 1]) / bnorm <= tol:
                break
        # assemble the correction from the preconditioned basis
        y = np.linalg.solve(H[:j_done, :j_done] + 1e-300 * np.eye(j_done),
                            g[:j_done]) if j_done else np.zeros(0)
        if j_done:
            x = x + apply_pc(V[:j_done].T @ y)
        r = b - matvec(x)
        if np.linalg.norm(r) / bnorm <= tol:
            return x, iters, "converged"
    return x, iters, "maxit"


def _bicgstab(matvec, apply_pc, b, tol, maxit, x0):
    n = len(b)
    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    bnorm = np.linalg.norm(b)
    r = b - matvec(x)
    restarted = False
    r_hat = r.copy()
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    pvec = np.zeros(n)
    iters = 0
    while iters < maxit:
        rho_new = r_hat @ r
        if abs(rho_new) < 1e-300 * bnorm * bnorm or (iters and abs(omega) < 1e-300):
            if restarted:
                return x, iters, "breakdown"
            # restart once from the current residual
            restarted = True
            r = b - matvec(x)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            pvec[:] = 0.0
            rho_new = r_hat @ r
            if abs(rho_new) < 1e-300:
                return x, iters, "breakdown"
        if iters == 0 or restarted and not np.any(pvec):
            pvec = r.copy()
        else:
            beta = (rho_new / rho) * (alpha / omega)
            pvec = r + beta * (pvec - omega * v)
        rho = rho_new
        y = apply_pc(pvec)
        v = matvec(y)
        denom = r_hat @ v
        if abs(denom) < 1e-300:
            if restarted:
                return x, iters, "breakdown"
            restarted = True
            r = b - matvec(x)
            r_hat = r.copy()
            rho = alpha = omega = 1.0
            v[:] = 0.0
            pvec[:] = 0.0
            iters += 1
            continue
        alpha = rho / denom
        s = r - alpha * v
        x = x + alpha * y
        iters += 1
        if np.linalg.norm(s) / bnorm <= tol:
            return x, iters, "converged"
        z = apply_pc(s)
        t = matvec(z)
        tt = t @ t
        if tt == 0.0:
            return x, iters, "breakdown" if restarted else "maxit"
        omega = (t @ s) / tt
        x = x + omega * z
        r = s - omega * t
        if np.linalg.norm(r) / bnorm <= tol:
            return x, iters, "converged"
    return x, iters, "maxit"
