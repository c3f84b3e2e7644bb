import numpy as np
import scipy.sparse as sp

from thermsim.linsol.blockmat import BlockMatrix


def random_block_matrix(rng, n, b, nwell=0, density=0.4, dd_boost=None):
    """Random nonsingular block matrix with a guaranteed block diagonal.

    ``dd_boost`` adds that multiple of the identity to every diagonal
    block, which keeps dense solves well-conditioned.
    """
    mask = rng.random((n, n)) < density
    np.fill_diagonal(mask, True)
    rows, cols = np.nonzero(mask)
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    data = rng.standard_normal((len(rows), b, b))
    if dd_boost is None:
        dd_boost = 2.0 * b * np.sqrt(n)
    diag = rows == cols
    data[diag] += dd_boost * np.eye(b)
    A = BlockMatrix(n, b, indptr, cols.astype(np.int64), data,
                    rng.standard_normal((n, b, nwell)),
                    rng.standard_normal((nwell, n, b)),
                    rng.standard_normal((nwell, nwell))
                    + np.eye(nwell) * 5.0)
    return A


def laplacian_1d(n):
    main = 2.0 * np.ones(n)
    off = -np.ones(n - 1)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def laplacian_2d(m):
    one = laplacian_1d(m)
    eye = sp.identity(m)
    return (sp.kron(one, eye) + sp.kron(eye, one)).tocsr()
