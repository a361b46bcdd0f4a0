"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid build or runtime configuration (bad patch size, tree shape, ...)."""


class BoundsError(ValueError):
    """Coordinate or displacement outside its valid range."""


class CorruptionError(ValueError):
    """Inconsistent internal data (assignment ids out of range, bad model file)."""
