"""Exception hierarchy for dp_survtest."""

from typing import Optional


class DpSurvError(Exception):
    """Base class for every error raised by this package."""


class InvalidConfigError(DpSurvError, ValueError):
    """A configuration or call parameter is outside its valid range."""


class NumericInputError(DpSurvError, ValueError):
    """Non-finite numbers reached a numeric routine."""


class DatasetValidationError(DpSurvError, ValueError):
    """A dataset (in memory or on disk) violates its schema or bounds."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleParametersError(DpSurvError, RuntimeError):
    """The private hazard estimator cannot run with the given n, epsilon, delta."""

    def __init__(self, message: str, server_id: Optional[str] = None):
        self.server_id = server_id
        if server_id is not None:
            message = f"server {server_id}: {message}"
        super().__init__(message)


class InvariantViolation(DpSurvError, RuntimeError):
    """An internal invariant failed; indicates a bug or corrupted input."""
