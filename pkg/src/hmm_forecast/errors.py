"""Exception hierarchy shared by every module.

The CLI maps each family onto a distinct exit code, so library code should
raise the most specific class available rather than a bare ``ValueError``.
"""


class HmmForecastError(Exception):
    """Base class for all errors raised by this package."""


class ArgumentError(HmmForecastError, ValueError):
    """A caller supplied an out-of-range or inconsistent argument."""


class DataError(HmmForecastError):
    """Input data is missing, malformed, or too short to use."""


class ArchiveFormatError(DataError):
    """A JSON archive file could not be decoded."""

    def __init__(self, path, reason):
        self.path = str(path)
        super().__init__(f"{self.path}: not a valid JSON archive file ({reason})")


class EmptyArchiveError(DataError):
    """An archive yielded zero parseable records."""


class SchemaError(DataError):
    """A CSV file lacks a required column."""

    def __init__(self, column, path=None):
        self.column = column
        where = f" in {path}" if path is not None else ""
        super().__init__(f"missing required column {column!r}{where}")


class InsufficientDataError(DataError):
    """Fewer observations than an operation needs."""


class NumericError(HmmForecastError, ArithmeticError):
    """A numerical routine failed, e.g. a covariance lost positive definiteness."""

    def __init__(self, message, state=None):
        self.state = state
        if state is not None:
            message = f"state {state}: {message}"
        super().__init__(message)


class DomainError(NumericError):
    """A metric was asked to divide by zero."""

    def __init__(self, message, indices=()):
        self.indices = tuple(indices)
        super().__init__(message)


class ModelFormatError(DataError):
    """A serialized model document is malformed or violates a model invariant."""
