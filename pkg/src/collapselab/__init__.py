"""collapselab: numerics for adiabatic collapse of finite spectral triples.

The package builds finite-dimensional spectral triple models whose Dirac
operator splits into a horizontal and a vertical part, rescales the vertical
part, and measures how spectra and quantum metrics converge onto the base
model as the rescaling parameter goes to zero.
"""
from __future__ import annotations

from .core import (
    AlgebraElement,
    BlockDiagonalOperator,
    ComplexMatrix,
    HermitianOperator,
    PreconditionError,
    SpectralTripleModel,
    commutator,
    graph_norm,
    hermitian_spectrum,
    lip_seminorm,
    op_norm,
)

__version__ = "0.1.0"

__all__ = [
    "AlgebraElement",
    "BlockDiagonalOperator",
    "ComplexMatrix",
    "HermitianOperator",
    "PreconditionError",
    "SpectralTripleModel",
    "commutator",
    "graph_norm",
    "hermitian_spectrum",
    "lip_seminorm",
    "op_norm",
    "__version__",
]
