"""Exception hierarchy shared by the library and the command line tool."""

from __future__ import annotations


class MinmaxError(Exception):
    """Base class for every error raised by :mod:`minmaxpred`."""


class StructureError(MinmaxError, ValueError):
    """Input arrays have the wrong shape, are asymmetric or otherwise malformed."""


class ConstraintError(MinmaxError, ValueError):
    """Trend columns are rank deficient or weights violate the trend constraints."""


class FactorizationError(MinmaxError, ArithmeticError):
    """A matrix that must be factored is singular or not positive definite.

    ``pivot`` is the 1-based index of the failing pivot when it is known.
    """

    def __init__(self, message: str, pivot: int | None = None):
        super().__init__(message)
        self.pivot = pivot


class ParseError(MinmaxError, ValueError):
    """A data file could not be parsed; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class InvariantError(MinmaxError, RuntimeError):
    """A constructed object failed one of its own consistency checks."""
