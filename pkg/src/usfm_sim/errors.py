"""Exception types shared across the simulator."""


class DimensionError(ValueError):
    """A transform length or grid axis is not a positive power of two."""


class SizeError(ValueError):
    """An input has the wrong number of elements for the requested operation."""


class ConfigError(ValueError):
    """A configuration value is out of range or inconsistent."""
