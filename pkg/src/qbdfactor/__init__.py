"""Stochastic UL/LU factorizations and Darboux transforms of block tridiagonal
(quasi-birth-and-death) transition matrices, with a matrix-valued Jacobi
example, spectral checks and urn-model simulations."""

from .blockmat import (
    BlockError,
    BlockGenerationError,
    BlockSequence,
    SingularBlockError,
    StochasticityReport,
    dump_json,
    from_blocks,
    load_json,
    multiply_banded,
    truncate_dense,
    validate_stochastic,
)
from .darboux import DarbouxResult, darboux_from_lu, darboux_from_ul
from .factorization import (
    LUFactors,
    TauStrategy,
    ULFactors,
    factor_lu,
    factor_ul,
    factorization_residual,
    monic_reduce,
)
from .jacobi import JacobiParams, transition_sequence

__version__ = "0.1.0"
