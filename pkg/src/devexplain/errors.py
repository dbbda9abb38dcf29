"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so new error types should subclass one
of the four roots below rather than raising bare exceptions.
"""


class DevexplainError(Exception):
    """Base class for all package errors."""


class ValidationError(DevexplainError):
    """Invalid argument, specification, or domain-object state."""


class IngestionError(DevexplainError):
    """A data file could not be read or parsed."""


class NumericalError(DevexplainError):
    """A numerical procedure failed (degenerate data, singular system, ...)."""


class SingularFitError(NumericalError):
    """Least-squares design matrix is rank deficient.

    Attributes
    ----------
    column : str
        Name of the (first) linearly dependent column.
    """

    def __init__(self, message: str, column: str):
        super().__init__(message)
        self.column = column


class SearchFailureError(NumericalError):
    """No restart of the multistart MAP search converged.

    Carries the per-run diagnostics so callers can inspect what happened.
    """

    def __init__(self, message: str, diagnostics: list | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
