"""Hot numerical kernels: compiled extension with a NumPy fallback.

The Cython extension ``thermsim.kernels._core`` is selected when it was
built; otherwise (or when ``THERMSIM_FORCE_PY=1``) the pure twins in
``_core_py`` are used.  Both expose the same functions:

    bsr_spmv, ilu_factor_inplace, lu_solve_csr, ilut_factor,
    lu_solve_split
"""

import os

from . import _core_py

if os.environ.get("THERMSIM_FORCE_PY"):
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        _impl = _core_py
        BACKEND = "python"

bsr_spmv = _impl.bsr_spmv
ilu_factor_inplace = _impl.ilu_factor_inplace
lu_solve_csr = _impl.lu_solve_csr
ilut_factor = _impl.ilut_factor
lu_solve_split = _impl.lu_solve_split

pure = _core_py
