"""Exception hierarchy shared by every stage."""


class BrainMRIError(Exception):
    """Base class for all package errors."""


class ArgumentError(BrainMRIError, ValueError):
    pass


class RangeError(ArgumentError):
    """Intensity outside the allowed range."""


class DomainError(ArgumentError):
    """Input outside a function's mathematical domain (e.g. log of a non-positive value)."""


class EmptyRegionError(ArgumentError):
    pass


class DegenerateHistogramError(ArgumentError):
    pass


class NumericError(BrainMRIError, ArithmeticError):
    pass


class LoadError(BrainMRIError, IOError):
    pass


class MalformedHeaderError(LoadError):
    pass


class TruncatedPayloadError(LoadError):
    pass


class UnsupportedFormatError(LoadError):
    pass


class CorruptCheckpointError(BrainMRIError, IOError):
    pass


class LayoutError(BrainMRIError):
    """Dataset directory does not have the expected class layout."""
