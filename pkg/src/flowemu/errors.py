"""Exception hierarchy shared across the package."""


class FlowEmuError(Exception):
    """Base class for every error raised by flowemu."""


class UsageError(FlowEmuError, ValueError):
    """Bad arguments: wrong shapes, non-finite inputs, invalid options."""


class ConfigError(UsageError):
    """Experiment configuration failed validation."""


class NumericalError(FlowEmuError):
    """Base class for failures of a numerical stage."""


class IllConditionedError(NumericalError):
    """Covariance matrix could not be factorized even after jitter escalation."""


class FitError(NumericalError):
    """Hyperparameter optimisation failed on every restart."""

    def __init__(self, message, best_state=None):
        super().__init__(message)
        self.best_state = best_state


class IntegrationError(NumericalError):
    """ODE integration failed (step-size underflow or non-finite state)."""


class DivergenceError(IntegrationError):
    """Trajectory left the finite range; carries the extremes seen so far."""

    def __init__(self, message, lower=None, upper=None):
        super().__init__(message)
        self.lower = lower
        self.upper = upper


class PropagationError(NumericalError):
    """Moment propagation produced an unusable state distribution."""


class InsufficientDataError(UsageError):
    """Too few design points for the requested computation."""
