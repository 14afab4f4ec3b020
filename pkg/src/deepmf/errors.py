"""Exception types shared by all modules."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class NumericalDomainError(ArithmeticError):
    """A computation left the domain where it is defined (non-finite values,
    negative variances beyond rounding, vanishing denominators)."""


class DivergenceError(NumericalDomainError):
    """A linearized map has slope >= 1, so no finite fixed point exists."""


class FactorizationError(NumericalDomainError):
    """Cholesky factorization failed even after the jitter schedule."""
