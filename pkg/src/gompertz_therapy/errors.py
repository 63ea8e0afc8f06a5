"""Exception hierarchy shared across the package."""


class GompertzError(Exception):
    """Base class for all package errors."""


class ValidationError(GompertzError, ValueError):
    """Malformed inputs: bad panels, configs, profiles or files."""


class NumericError(GompertzError, RuntimeError):
    """Numerical failure: quadrature, degenerate variance, bad domain."""


class QuadratureError(NumericError):
    """Quadrature could not produce a usable value on an interval."""

    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class EstimationError(NumericError):
    """An estimation step failed (no root bracket, degenerate design, ...)."""


class SimulationError(NumericError):
    """Path generation failed (e.g. too many non-positive Euler paths)."""
