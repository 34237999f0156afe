"""Exception hierarchy shared by every gridfill module."""


class GridfillError(Exception):
    """Base class for all errors raised by gridfill."""


class ConfigurationError(GridfillError):
    """Inconsistent or invalid configuration (dt ratios, N_s/N_d mismatch, ...)."""


class InputError(GridfillError):
    """Malformed or insufficient input data."""


class ConvergenceError(GridfillError):
    """An iterative solver failed to converge."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])
