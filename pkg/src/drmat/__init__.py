"""Classical dynamical r-matrices for generalized Belavin-Drinfeld triples."""
from .errors import DrmatError
from .liealg import (
    AlgebraElement,
    CartanDatum,
    LieAlgebraData,
    TensorElement,
    bracket,
    build_simple_lie_algebra,
    casimir_omega,
    tensor_act,
)

__all__ = [
    "AlgebraElement",
    "CartanDatum",
    "DrmatError",
    "LieAlgebraData",
    "TensorElement",
    "bracket",
    "build_simple_lie_algebra",
    "casimir_omega",
    "tensor_act",
]
__version__ = "0.1.0"
