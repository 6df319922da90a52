"""Exception types shared across the package."""


class AffplanError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(AffplanError):
    """An array argument has the wrong shape, dtype, or value range."""


class FormatError(AffplanError):
    """A serialized artifact (raster file, checkpoint, scene) is malformed."""


class PreconditionError(AffplanError):
    """An action was requested in a world that does not afford it."""


class ConfigurationError(AffplanError):
    """An operation was invoked with missing or inconsistent configuration."""


class InvalidWorldError(AffplanError):
    """A world state breaks a structural invariant (overlap, bad stacking)."""
