class WgGpeError(Exception):
    """Base class for errors raised by wggpe."""


class DomainError(WgGpeError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConfigError(WgGpeError, ValueError):
    """Invalid solver or experiment configuration."""


class ConvergenceError(WgGpeError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    ``history`` holds whatever diagnostics the solver collected, and
    ``best_residual`` the smallest residual it reached.
    """

    def __init__(self, message, history=None, best_residual=None):
        super().__init__(message)
        self.history = history if history is not None else []
        self.best_residual = best_residual


class ArgumentError(WgGpeError, ValueError):
    """Arguments are individually valid but inconsistent with each other."""
