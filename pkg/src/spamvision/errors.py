"""Exception types shared across the package."""


class DecodeError(Exception):
    """An image stream could not be decoded."""


class InvalidArgument(ValueError):
    """An argument violates a documented precondition."""


class ShapeError(ValueError):
    """Array shapes do not compose; the message names both shapes."""


class StateError(RuntimeError):
    """An operation was called out of order (e.g. backward before forward)."""


class IoError(Exception):
    """A filesystem read or write failed."""


class EmptyCorpus(Exception):
    """A corpus directory contained no usable images."""


class VersionError(Exception):
    """A serialized artifact has an unsupported format version."""


class ConfigError(Exception):
    """A configuration file or flag value is invalid."""
