"""Exception types raised by the estimators."""


class HiddenDiffError(Exception):
    """Base class for numerical failures (CLI exit code 3)."""


class ConfigError(ValueError):
    """Invalid configuration value (CLI exit code 2)."""


class WeightCollapse(HiddenDiffError):
    """All particle weights underflowed to zero."""

    def __init__(self, t=None, message="total particle weight collapsed to zero"):
        self.t = t
        if t is not None:
            message = f"{message} at t={t}"
        super().__init__(message)


class ZeroProbabilitySequence(HiddenDiffError):
    """The HMM assigns probability zero to the observed symbols."""

    def __init__(self, t):
        self.t = t
        super().__init__(f"symbol sequence has zero probability at t={t}")


class InfeasibleParameters(HiddenDiffError, ValueError):
    """Transition probabilities outside their admissible range."""


class NewtonConvergenceError(HiddenDiffError):
    """Newton iteration for the M-step did not reach tolerance.

    ``params`` holds the best iterate found so callers may continue with it.
    """

    def __init__(self, message, params=None, residual=None):
        self.params = params
        self.residual = residual
        super().__init__(message)


class SingularJacobian(HiddenDiffError):
    """The M-step Jacobian could not be factorized."""
