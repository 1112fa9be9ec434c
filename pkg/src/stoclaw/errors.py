"""Exception types shared across the package."""


class StoclawError(Exception):
    """Base class for every error raised by this package."""


class AllLinearTermsZero(StoclawError):
    """Flux has no nonzero coefficient of degree >= 1."""


class WindowOverflow(StoclawError):
    """Reachability search exceeded its working-set cap."""


class GridTooSmall(StoclawError):
    """Collocation grid cannot resolve the requested nonlinear product."""


class Blowup(StoclawError):
    """Solution norm crossed the configured blowup threshold.

    ``trace`` holds the monitored norm history up to the failing step.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = [] if trace is None else list(trace)


class OutOfRange(StoclawError):
    """Requested time window is not on the checkpoint grid."""


class CapExceeded(StoclawError):
    """Tracked basis is larger than the configured cap."""


class SolveFailure(StoclawError):
    """Regularised Gram system is numerically singular."""


class ParseError(StoclawError):
    def __init__(self, line, column, message):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class ValidationError(StoclawError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
