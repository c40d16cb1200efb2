"""Exception types shared across the package."""


class VianaLabError(Exception):
    """Base class for all package errors."""


class InvalidParamsError(VianaLabError, ValueError):
    """Map or experiment parameters violate a stated bound."""


class RegionExitError(VianaLabError):
    """An orbit left the forward-invariant strip.

    Attributes
    ----------
    step : int
        Index of the offending iterate (0 is the initial point).
    """

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class ConvergenceError(VianaLabError):
    """An iterative solver did not reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class UndefinedConstantError(VianaLabError, ValueError):
    """A derived constant (sigma, the K threshold, ...) needs zeta > 0."""
