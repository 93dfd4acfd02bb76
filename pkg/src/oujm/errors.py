"""Exception hierarchy shared by every module."""


class OUJMError(Exception):
    """Base class for all engine errors."""

    exit_code = 1


class DimensionError(OUJMError, ValueError):
    exit_code = 2


class DomainError(OUJMError, ValueError):
    exit_code = 2


class DecompositionError(OUJMError, ArithmeticError):
    """Cholesky factorization failed; ``pivot`` is the failing column."""

    exit_code = 3

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class SingularityError(OUJMError, ArithmeticError):
    exit_code = 3


class ConstraintError(OUJMError, ValueError):
    exit_code = 3


class UnsupportedDimensionError(OUJMError, ValueError):
    exit_code = 2


class OrderingError(OUJMError, ValueError):
    exit_code = 2


class StructuralError(OUJMError, ValueError):
    exit_code = 2


class RangeError(OUJMError, ValueError):
    exit_code = 2


class EmptyLikelihoodError(OUJMError, ValueError):
    exit_code = 2


class GradientUndefinedError(OUJMError, ArithmeticError):
    exit_code = 3


class InitializationError(OUJMError, RuntimeError):
    exit_code = 4


class DataError(OUJMError, ValueError):
    exit_code = 5


class ConfigError(OUJMError, ValueError):
    """Configuration failed validation; ``violations`` lists every problem found."""

    exit_code = 6

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {v}" for v in self.violations))
