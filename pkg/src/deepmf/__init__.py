"""Mean-field complexity propagation in deep networks."""

from deepmf.errors import (
    DivergenceError,
    FactorizationError,
    InvalidArgument,
    NumericalDomainError,
)

__version__ = "0.1.0"

__all__ = [
    "DivergenceError",
    "FactorizationError",
    "InvalidArgument",
    "NumericalDomainError",
]
