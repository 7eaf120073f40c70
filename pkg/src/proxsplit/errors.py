"""Exception hierarchy shared across the package."""


class ProxSplitError(Exception):
    """Base class for every error raised by proxsplit."""


class DimensionMismatch(ProxSplitError, ValueError):
    pass


class NotSymmetric(ProxSplitError, ValueError):
    pass


class NotPSD(ProxSplitError, ValueError):
    pass


class NonPositiveStep(ProxSplitError, ValueError):
    pass


class EmptyVector(ProxSplitError, ValueError):
    pass


class SolveFailure(ProxSplitError, RuntimeError):
    pass


class StepBoundViolated(ProxSplitError, ValueError):
    """Raised when a step-size product exceeds its admissible bound."""


class StepOutOfRange(ProxSplitError, ValueError):
    pass


class ThetaOutOfRange(ProxSplitError, ValueError):
    pass


class PeacemanRachfordRequiresStrongMonotonicity(ThetaOutOfRange):
    """theta >= 2 was requested while one of the operators has mu = 0."""


class InconsistentDimensions(DimensionMismatch):
    pass


class InvalidRegularity(ProxSplitError, ValueError):
    pass


class InvalidSchedule(ProxSplitError, ValueError):
    pass


class ParseError(ProxSplitError, ValueError):
    """Malformed returns file. ``row``/``col`` are 1-based data coordinates."""

    def __init__(self, message, row=None, col=None):
        loc = ""
        if row is not None:
            loc = f" (row {row}" + (f", column {col})" if col is not None else ")")
        super().__init__(message + loc)
        self.row = row
        self.col = col


class InsufficientData(ProxSplitError, ValueError):
    pass


class OracleDisagreement(ProxSplitError, RuntimeError):
    pass


class ConfigError(ProxSplitError, ValueError):
    """Invalid scheme configuration document."""


class FactorizationError(ProxSplitError, ValueError):
    """A proposed factor ``C`` is not injective or does not reproduce ``M``."""
