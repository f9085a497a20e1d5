"""Exception hierarchy for mwxe."""
from typing import Optional, Tuple


class MwxeError(Exception):
    """Base class for all mwxe errors."""


class WideOverflowError(MwxeError, OverflowError):
    """Double-double arithmetic saturated to infinity."""


class RangeError(MwxeError, OverflowError):
    """Special function argument outside the representable range."""


class SingularityError(MwxeError, ZeroDivisionError):
    """Evaluation at a kernel or expansion singularity."""


class DomainError(MwxeError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class TableSizeError(MwxeError, IndexError):
    """Moment table too small for the requested index."""


class ContractError(MwxeError, ValueError):
    """Operands that do not belong together (level, degree mismatch)."""


class SeriesConvergenceError(MwxeError, ArithmeticError):
    """Series summation hit the term cap before the convergence test passed."""

    def __init__(self, message: str, key: Optional[Tuple[int, ...]] = None,
                 level: Optional[int] = None, partial_sum: float = 0.0, terms: int = 0):
        super().__init__(message)
        self.message = message
        self.key = key
        self.level = level
        self.partial_sum = partial_sum
        self.terms = terms

    def __reduce__(self):
        return (type(self), (self.message, self.key, self.level, self.partial_sum, self.terms))

    def with_level(self, level: int) -> "SeriesConvergenceError":
        return SeriesConvergenceError(self.message, self.key, level, self.partial_sum, self.terms)


class MatrixFileError(MwxeError, ValueError):
    """Malformed matrix file."""

    def __init__(self, message: str, path: str = "", line: int = 0):
        location = f"{path}:{line}" if line else path
        super().__init__(f"{location}: {message}" if location else message)
        self.message = message
        self.path = path
        self.line = line

    def __reduce__(self):
        return (type(self), (self.message, self.path, self.line))
