"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: ValidationError and FormatError exit
with 2, NumericError with 3.
"""


class LangGeoError(Exception):
    """Base class for all toolkit errors."""


class ValidationError(LangGeoError):
    """Bad inputs: shape mismatches, non-finite values, broken preconditions."""


class FormatError(ValidationError):
    """Malformed or corrupt on-disk artifact."""


class CoverageError(ValidationError):
    """A distance matrix has language pairs observed in no run."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericError(LangGeoError):
    """Numeric failure: singular Hessian, non-convergence."""
