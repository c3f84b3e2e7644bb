"""Block-sparse linear algebra: block-CSR matrices, decoupling operators,
ILU factorizations, restricted additive Schwarz, a classical AMG for the
pressure block, CPR-type preconditioners and Krylov solvers."""

from .blockmat import BlockMatrix, dump_matrix, load_matrix
from .decouple import DECOUPLE_METHODS, decouple
from .ilu import ilu_factor
from .ras import RASPreconditioner
from .amg import AMGSolver
from .cpr import CPRPreconditioner, extract_pressure_block
from .krylov import krylov_solve

__all__ = [
    "BlockMatrix", "dump_matrix", "load_matrix", "DECOUPLE_METHODS",
    "decouple", "ilu_factor", "RASPreconditioner", "AMGSolver",
    "CPRPreconditioner", "extract_pressure_block", "krylov_solve",
]
