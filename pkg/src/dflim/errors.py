"""Exception hierarchy shared by all dflim modules."""


class DflimError(Exception):
    """Base class for all errors raised by dflim."""


class InvalidInput(DflimError):
    """Malformed or dimensionally inconsistent input."""


class NumericalFailure(DflimError):
    """An iterative numerical kernel failed to converge."""


class NotPositiveDefinite(DflimError):
    """A matrix required to be SPD failed factorization after jitter escalation."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot


class DegenerateSpectrum(DflimError):
    """All singular values are zero; rank selection is undefined."""


class InsufficientData(DflimError):
    """Too few observations for the requested estimate."""


class DegenerateVariance(DflimError):
    """A constant series has no usable variance."""


class InfeasibleTarget(DflimError):
    """Requested target ARL0 is below the value attainable at H = 0."""


class ParseError(DflimError):
    """A file could not be parsed; message carries location information."""


class UsageError(DflimError):
    """API misuse, e.g. stepping a monitor that has already alarmed."""
