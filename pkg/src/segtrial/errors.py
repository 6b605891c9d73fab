"""Exception hierarchy.

Each error carries the process exit code the CLI maps it to.
"""

from __future__ import annotations


class SegtrialError(Exception):
    exit_code = 1


class ParseError(SegtrialError, ValueError):
    exit_code = 2

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyDatasetError(ParseError):
    pass


class InsufficientDataError(SegtrialError, ValueError):
    exit_code = 3


class DomainError(InsufficientDataError):
    """A value outside the domain of the log transform."""


class DegenerateDistributionError(InsufficientDataError):
    pass


class NumericalUnderflowError(InsufficientDataError, ArithmeticError):
    pass


class InstabilityError(InsufficientDataError):
    """Too many resampling or simulation replicates failed."""


class BoundaryMismatchError(SegtrialError, ValueError):
    exit_code = 4


class OutOfRangeError(BoundaryMismatchError):
    pass


class GridMismatchError(SegtrialError, ValueError):
    exit_code = 5


class ConfigError(SegtrialError, ValueError):
    exit_code = 6

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


class InfiniteOddsError(SegtrialError, ValueError):
    pass
