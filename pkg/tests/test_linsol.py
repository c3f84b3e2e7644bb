import numpy as np
import pytest
import scipy.sparse as sp

from conftest import laplacian_1d, laplacian_2d, random_block_matrix
from thermsim.linsol import (AMGSolver, BlockMatrix, CPRPreconditioner,
                             decouple, dump_matrix, extract_pressure_block,
                             ilu_factor, krylov_solve, load_matrix,
                             RASPreconditioner)
from thermsim.linsol.decouple import DECOUPLE_METHODS, decouple_csr


# ------------------------------------------------------------------ spmv

def test_spmv_identity_blocks():
    n, b = 5, 3
    indptr = np.arange(n + 1, dtype=np.int64)
    indices = np.arange(n, dtype=np.int64)
    data = np.tile(np.eye(b), (n, 1, 1))
    A = BlockMatrix(n, b, indptr, indices, data,
                    np.zeros((n, b, 0)), np.zeros((0, n, b)), np.zeros((0, 0)))
    x = np.arange(n * b, dtype=float)
    assert np.allclose(A.spmv(x), x)


def test_spmv_matches_dense_oracle():
    rng = np.random.default_rng(5)
    A = random_block_matrix(rng, 6, 2, nwell=2)
    dense = A.to_csr().toarray()
    x = rng.standard_normal(A.nscalar)
    assert np.allclose(A.spmv(x), dense @ x, atol=1e-14 * np.abs(dense).sum())


def test_spmv_zero_matrix():
    n, b = 4, 2
    indptr = np.arange(n + 1, dtype=np.int64)
    indices = np.arange(n, dtype=np.int64)
    A = BlockMatrix(n, b, indptr, indices, np.zeros((n, b, b)),
                    np.zeros((n, b, 0)), np.zeros((0, n, b)), np.zeros((0, 0)))
    assert np.all(A.spmv(np.ones(n * b)) == 0.0)


def test_spmv_dim_mismatch():
    rng = np.random.default_rng(0)
    A = random_block_matrix(rng, 3, 2)
    with pytest.raises(Exception):
        A.spmv(np.ones(5))


# -------------------------------------------------------------- decouple

@pytest.mark.parametrize("method", [m for m in DECOUPLE_METHODS if m != "NONE"])
def test_decouple_preserves_solution(method):
    rng = np.random.default_rng(11)
    for _ in range(6):
        n = rng.integers(4, 9)
        b = rng.integers(2, 5)
        A = random_block_matrix(rng, int(n), int(b))
        x_true = rng.standard_normal(A.nscalar)
        rhs = A.spmv(x_true)
        A2, rc2, _ = decouple(A, rhs.reshape(A.n, A.b), np.zeros(0), method)
        x2 = np.linalg.solve(A2.to_csr().toarray(), rc2.reshape(-1))
        assert np.linalg.norm(x2 - x_true) / np.linalg.norm(x_true) < 1e-10


@pytest.mark.parametrize("method", ["ABF", "GJE"])
def test_decouple_diag_blocks_become_identity(method):
    rng = np.random.default_rng(3)
    A = random_block_matrix(rng, 7, 4, nwell=1)
    rhs = rng.standard_normal((A.n, A.b))
    A2, _, _ = decouple(A, rhs, np.zeros(1), method)
    diags = A2.data[A2.diag_positions()]
    err = np.abs(diags - np.eye(A.b)).max()
    assert err <= 1e-12


def test_decouple_block_size_one():
    rng = np.random.default_rng(9)
    A = random_block_matrix(rng, 6, 1)
    rhs = rng.standard_normal((6, 1))
    # diagonal-normalizing methods give A/diag with unit diagonal
    for method in ("ABF", "GJE"):
        A2, _, _ = decouple(A, rhs, np.zeros(0), method)
        diags = A2.data[A2.diag_positions()][:, 0, 0]
        assert np.allclose(diags, 1.0, atol=1e-12)
    # the 1x1 row-sum operator is the identity matrix
    for method in ("FRS", "DRS"):
        A2, rc2, _ = decouple(A, rhs, np.zeros(0), method)
        assert np.array_equal(A2.data, A.data)
        assert np.array_equal(rc2, rhs)


def test_frs_first_row_is_exact_row_sum():
    rng = np.random.default_rng(4)
    A = random_block_matrix(rng, 5, 3, nwell=2)
    rhs = rng.standard_normal((A.n, A.b))
    A2, rc2, _ = decouple(A, rhs, np.zeros(2), "FRS")
    for k in range(A.data.shape[0]):
        assert np.array_equal(A2.data[k, 0, :], A.data[k].sum(axis=0))
    assert np.array_equal(rc2[:, 0], rhs.sum(axis=1))
    assert np.array_equal(A2.wb[:, 0, :], A.wb.sum(axis=1))


def test_decoupled_system_well_rows_untouched():
    rng = np.random.default_rng(8)
    A = random_block_matrix(rng, 5, 3, nwell=2)
    rhs = rng.standard_normal((A.n, A.b))
    rw = rng.standard_normal(2)
    A2, _, rw2 = decouple(A, rhs, rw, "FRS+GJE")
    assert np.array_equal(A2.bw, A.bw)
    assert np.array_equal(A2.ww, A.ww)
    assert np.array_equal(rw2, rw)


def test_decouple_with_wells_preserves_solution():
    rng = np.random.default_rng(13)
    A = random_block_matrix(rng, 6, 3, nwell=2)
    x_true = rng.standard_normal(A.nscalar)
    rhs = A.spmv(x_true)
    nb = A.n * A.b
    A2, rc2, rw2 = decouple(A, rhs[:nb].reshape(A.n, A.b), rhs[nb:], "DRS+GJE")
    full_rhs = np.concatenate([rc2.reshape(-1), rw2])
    x2 = np.linalg.solve(A2.to_csr().toarray(), full_rhs)
    assert np.linalg.norm(x2 - x_true) / np.linalg.norm(x_true) < 1e-10


# ------------------------------------------------------------------- ilu

def test_ilu_diagonal_matrix_exact():
    d = np.array([2.0, 4.0, 8.0])
    A = sp.diags(d).tocsr()
    for variant in ("iluk", "ilut"):
        fac = ilu_factor(A, variant=variant)
        r = np.array([2.0, 8.0, 32.0])
        assert np.allclose(fac.solve(r), r / d)


def test_ilu0_richardson_reduces_residual():
    A = laplacian_1d(40)
    fac = ilu_factor(A, variant="iluk", k=0)
    rng = np.random.default_rng(2)
    b = rng.standard_normal(40)
    x = fac.solve(b)
    assert np.linalg.norm(b - A @ x) < np.linalg.norm(b)


def test_ilut_full_fill_equals_dense_solve():
    rng = np.random.default_rng(6)
    n = 25
    A = rng.standard_normal((n, n)) + n * np.eye(n)
    Acsr = sp.csr_matrix(A)
    fac = ilu_factor(Acsr, variant="ilut", p=n, tol=0.0)
    b = rng.standard_normal(n)
    x = fac.solve(b)
    want = np.linalg.solve(A, b)
    assert np.linalg.norm(x - want) / np.linalg.norm(want) < 1e-12


def test_iluk_higher_level_more_accurate():
    A = laplacian_2d(12)
    rng = np.random.default_rng(7)
    b = rng.standard_normal(A.shape[0])
    res = []
    for k in (0, 1, 2):
        fac = ilu_factor(A, variant="iluk", k=k)
        x = fac.solve(b)
        res.append(np.linalg.norm(b - A @ x))
    assert res[2] < res[1] < res[0]


def test_ilu_zero_pivot_shift_warns():
    A = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.warns(UserWarning, match="shifted"):
        ilu_factor(A, variant="iluk", k=0)


# ------------------------------------------------------------------- ras

def test_ras_single_part_equals_local_solver():
    A = laplacian_1d(30)
    owner = np.zeros(30, dtype=np.int64)
    ras = RASPreconditioner(A, owner, overlap=1, local_solver="ilut",
                            ilut_p=30, ilut_tol=0.0)
    fac = ilu_factor(A, variant="ilut", p=30, tol=0.0)
    r = np.sin(np.arange(30.0))
    assert np.allclose(ras.apply(r), fac.solve(r))


def test_ras_overlap0_scalar_parts_is_jacobi():
    A = laplacian_1d(10)
    owner = np.arange(10, dtype=np.int64)
    ras = RASPreconditioner(A, owner, overlap=0, local_solver="iluk")
    r = np.arange(1.0, 11.0)
    assert np.allclose(ras.apply(r), r / 2.0)


def _pcg_style_iterations(A, pc, tol=1e-8):
    res = krylov_solve(A, np.ones(A.shape[0]), method="gmres", pc=pc,
                       tol=tol, maxit=500)
    assert res.status == "converged"
    return res.iterations


def test_ras_overlap_monotone_iterations():
    A = laplacian_1d(128)
    owner = np.repeat(np.arange(4), 32).astype(np.int64)
    iters = []
    for ov in (0, 1):
        ras = RASPreconditioner(A, owner, overlap=ov, local_solver="ilut",
                                ilut_p=200, ilut_tol=0.0)
        iters.append(_pcg_style_iterations(A, ras))
    assert iters[1] <= iters[0]


def test_ras_restricted_write_covers_all_rows():
    A = laplacian_2d(8)
    owner = (np.arange(64) // 16).astype(np.int64)
    ras = RASPreconditioner(A, owner, overlap=1)
    z = ras.apply(np.ones(64))
    assert np.all(np.isfinite(z)) and np.count_nonzero(z) == 64


# ------------------------------------------------------------------- amg

def test_amg_poisson_one_vcycle_error_reduction():
    A = laplacian_1d(64)
    rng = np.random.default_rng(1)
    x_true = rng.standard_normal(64)
    b = A @ x_true
    amg = AMGSolver(A)
    x1 = amg.apply(b)
    e0 = np.linalg.norm(x_true)
    e1 = np.linalg.norm(x_true - x1)
    assert e1 * 5.0 <= e0


def test_amg_zero_rhs():
    A = laplacian_1d(32)
    amg = AMGSolver(A)
    assert np.all(amg.apply(np.zeros(32)) == 0.0)


def test_amg_diagonal_exact_in_one_cycle():
    d = np.linspace(1.0, 5.0, 50)
    A = sp.diags(d).tocsr()
    amg = AMGSolver(A)  # nothing to coarsen: direct coarse solve is exact
    r = np.ones(50)
    assert np.allclose(amg.apply(r), r / d)


def test_amg_2d_poisson_converges_in_krylov():
    A = laplacian_2d(16)
    amg = AMGSolver(A)
    res = krylov_solve(A, np.ones(A.shape[0]), method="gmres", pc=amg,
                       tol=1e-8, maxit=100)
    assert res.status == "converged"
    assert res.iterations <= 30


# ------------------------------------------------------------------- cpr

def _block_of_csr(A_csr):
    n = A_csr.shape[0]
    bsr = sp.bsr_matrix(A_csr, blocksize=(1, 1))
    return BlockMatrix(n, 1, bsr.indptr.astype(np.int64),
                       bsr.indices.astype(np.int64), np.array(bsr.data),
                       np.zeros((n, 1, 0)), np.zeros((0, n, 1)),
                       np.zeros((0, 0)))


@pytest.mark.parametrize("kind", ["cpr-fp", "cpr-pf", "cpr-fpf"])
def test_cpr_reduces_residual_on_spd_problem(kind):
    A = _block_of_csr(laplacian_2d(10))
    owner = (np.arange(100) // 25).astype(np.int64)
    pc = CPRPreconditioner(A, kind=kind, owner=owner, overlap=1)
    b = np.ones(100)
    z = pc.apply(b)
    assert np.linalg.norm(b - A.spmv(z)) < np.linalg.norm(b)


def test_cpr_zero_residual_zero_correction():
    A = _block_of_csr(laplacian_1d(20))
    pc = CPRPreconditioner(A, kind="cpr-fpf",
                           owner=np.zeros(20, dtype=np.int64))
    assert np.all(pc.apply(np.zeros(20)) == 0.0)


def test_pressure_restriction_prolongation_pairing():
    rng = np.random.default_rng(3)
    A = random_block_matrix(rng, 6, 3)
    app = extract_pressure_block(A)
    assert app.shape == (6, 6)
    # restriction of a prolonged pressure vector is the identity
    zp = rng.standard_normal(6)
    full = np.zeros(A.n * A.b)
    p_rows = np.arange(A.n) * A.b
    full[p_rows] = zp
    assert np.array_equal(full[p_rows], zp)
    # App entries equal the (0,0) scalar of each block
    d = A.data[A.diag_positions()][:, 0, 0]
    assert np.allclose(app.diagonal(), d)


def test_cpr_on_block_system_accelerates_gmres():
    rng = np.random.default_rng(21)
    A = random_block_matrix(rng, 30, 3, nwell=2, density=0.12)
    owner = np.zeros(A.nscalar, dtype=np.int64)
    owner[:45] = 0
    owner[45:] = 1
    pc = CPRPreconditioner(A, kind="cpr-fpf", owner=owner, overlap=1)
    b = rng.standard_normal(A.nscalar)
    res = krylov_solve(A, b, method="gmres", pc=pc, tol=1e-10, maxit=200)
    assert res.status == "converged"


def test_preconditioner_application_is_linear():
    A = _block_of_csr(laplacian_2d(8))
    pc = CPRPreconditioner(A, kind="cpr-fpf",
                           owner=np.zeros(64, dtype=np.int64))
    rng = np.random.default_rng(12)
    r1 = rng.standard_normal(64)
    r2 = rng.standard_normal(64)
    lhs = pc.apply(r1 + r2)
    rhs = pc.apply(r1) + pc.apply(r2)
    assert np.allclose(lhs, rhs, atol=1e-10 * np.linalg.norm(lhs))


# ---------------------------------------------------------------- krylov

@pytest.mark.parametrize("method", ["gmres", "bicgstab"])
def test_krylov_identity_converges_immediately(method):
    A = sp.identity(10, format="csr")
    b = np.arange(10.0)
    res = krylov_solve(A, b, method=method, tol=1e-12, maxit=10)
    assert res.status == "converged"
    assert res.iterations <= 1
    assert np.allclose(res.x, b)


@pytest.mark.parametrize("method", ["gmres", "bicgstab"])
def test_krylov_2d_laplacian_with_ras_ilu0(method):
    A = laplacian_2d(32)
    owner = (np.arange(A.shape[0]) // 256).astype(np.int64)
    ras = RASPreconditioner(A, owner, overlap=1, local_solver="iluk",
                            iluk_level=0)
    b = np.ones(A.shape[0])
    res = krylov_solve(A, b, method=method, pc=ras, tol=1e-8, maxit=100)
    assert res.status == "converged"
    assert res.iterations <= 100


@pytest.mark.parametrize("method", ["gmres", "bicgstab"])
def test_krylov_matches_dense_solve(method):
    rng = np.random.default_rng(17)
    n = 50
    A = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n)
    res = krylov_solve(sp.csr_matrix(A), b, method=method, tol=1e-12,
                       maxit=400)
    want = np.linalg.solve(A, b)
    assert res.status == "converged"
    assert np.linalg.norm(res.x - want) / np.linalg.norm(want) < 1e-8


def test_krylov_reports_verified_residual():
    A = laplacian_1d(50)
    b = np.ones(50)
    res = krylov_solve(A, b, method="gmres", tol=1e-10, maxit=500)
    rel = np.linalg.norm(b - A @ res.x) / np.linalg.norm(b)
    assert np.isclose(res.relative_residual, rel, rtol=1e-8, atol=1e-14)
    assert (res.status == "converged") == (rel <= 1e-10 * 1.0001)


def test_krylov_zero_rhs():
    A = laplacian_1d(9)
    res = krylov_solve(A, np.zeros(9), method="bicgstab")
    assert res.status == "converged" and np.all(res.x == 0.0)


# ----------------------------------------------------------- dump / load

def test_matrix_dump_load_round_trip(tmp_path):
    rng = np.random.default_rng(30)
    A = random_block_matrix(rng, 4, 2, nwell=1)
    b = rng.standard_normal(A.nscalar)
    path = tmp_path / "system.coo"
    dump_matrix(A, b, path)
    A2, b2 = load_matrix(path)
    assert np.array_equal(b2, b)
    assert np.allclose(A2.toarray(), A.to_csr().toarray(), rtol=0, atol=0)


def test_decouple_csr_helper_round_trip():
    rng = np.random.default_rng(31)
    A = random_block_matrix(rng, 5, 2)
    x = rng.standard_normal(A.nscalar)
    rhs = A.spmv(x)
    A2, b2 = decouple_csr(A.to_csr(), rhs, 2, "FRS+ABF")
    x2 = np.linalg.solve(A2.toarray(), b2)
    assert np.linalg.norm(x2 - x) / np.linalg.norm(x) < 1e-10
