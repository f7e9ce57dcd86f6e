"""Exception hierarchy shared by every coordkit module."""


class CoordkitError(Exception):
    """Base class for all toolkit errors."""


class InstanceFormatError(CoordkitError, ValueError):
    """A table, axis list or sequence block is malformed or inconsistent."""


class DomainError(CoordkitError, ValueError):
    """A scalar parameter lies outside the domain of a closed-form expression."""


class ConfigurationError(CoordkitError, ValueError):
    """An optimizer or simulator option is out of range."""


class InfeasibleConfigurationError(CoordkitError):
    """A coding configuration violates a rate inequality or a resource cap."""
