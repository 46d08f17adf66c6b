"""Exception taxonomy shared across the package.

Every public operation raises one of these instead of bare ValueError so
callers can tell configuration mistakes apart from numerical trouble.
"""


class SaclError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(SaclError, ValueError):
    """A parameter is outside its documented domain (e.g. tau <= 0)."""


class ShapeError(SaclError, ValueError):
    """Array dimensions do not line up."""


class NumericError(SaclError, ArithmeticError):
    """A non-finite value appeared where finiteness is required."""


class DegenerateInputError(SaclError, ValueError):
    """Input is valid in shape but degenerate in value (e.g. near-zero norm).

    Raised instead of silently clamping: a vanishing feature norm usually
    means the encoder collapsed, and hiding that behind an epsilon would
    mask the failure.
    """


class ProtocolError(SaclError, RuntimeError):
    """An operation was called in a way that breaks its usage contract
    (empty batch, stale cache, too few samples for an episode, ...)."""


class ParseError(SaclError, ValueError):
    """A data file could not be parsed; message names the offending line."""


class TrainingError(SaclError, RuntimeError):
    """Training diverged (non-finite loss); message names the iteration."""
