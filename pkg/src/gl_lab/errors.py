"""Shared exception types."""


class DomainError(ValueError):
    """Invalid lattice geometry or site/bond arguments."""


class ConvergenceError(RuntimeError):
    """An iterative solver failed to reach its tolerance within its cap."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class StabilityError(RuntimeError):
    """A dynamics step produced non-finite values (step size too large)."""


class EstimateRefusedError(RuntimeError):
    """A Monte Carlo estimator refused to report (too many flagged replicas)."""


class ConfigError(ValueError):
    """Invalid or out-of-range run configuration."""
