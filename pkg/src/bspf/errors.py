class BspfError(Exception):
    """Base class for library errors."""


class ShapeError(BspfError, ValueError):
    """Operands have incompatible or invalid shapes."""


class ConfigError(BspfError, ValueError):
    """A configuration value is out of range or inconsistent."""
