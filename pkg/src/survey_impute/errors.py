"""Exception hierarchy shared across the package."""


class SurveyImputeError(Exception):
    """Base class for all package errors."""


class DegenerateDesignError(SurveyImputeError, ValueError):
    """The respondent design matrix is singular or too small to fit."""


class NoRespondentsError(SurveyImputeError, ValueError):
    """Imputation was requested but no unit has an observed outcome."""


class ConvergenceError(SurveyImputeError, RuntimeError):
    """An estimating-equation solve failed to reach tolerance."""

    def __init__(self, message, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class ReplicateFailureError(SurveyImputeError, RuntimeError):
    """Too many replicate fits failed for the variance estimate to be trusted."""


class SchemaError(SurveyImputeError, ValueError):
    """Input data does not follow the expected layout."""
