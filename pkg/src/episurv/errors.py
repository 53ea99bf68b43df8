"""Exceptions raised by the model fitters."""


class ModelError(RuntimeError):
    """A model could not be fitted to the supplied data."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


class DivergenceError(ModelError):
    """Coefficient ran off to infinity (monotone partial likelihood)."""


class SeparationError(ModelError):
    """Complete or quasi-complete separation in a logistic fit."""


class NonIdentifiableError(ModelError):
    """Information matrix is singular at the current estimate."""


class DegenerateOutcomeError(ModelError):
    """All outcomes are equal, so there is nothing to model."""


class NotConvergedError(ModelError):
    """Inference was requested from a fit that did not converge."""
