"""Exception types shared across frnet."""


class FrnetError(Exception):
    """Base class for all library errors."""


class GeometryError(FrnetError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class InvalidInputError(FrnetError, ValueError):
    """Input values are unusable (empty axes, out-of-range labels, non-finite data)."""


class ConfigError(FrnetError, ValueError):
    """A configuration value is invalid or inconsistent."""


class FormatError(FrnetError, ValueError):
    """A binary container failed validation."""


class PartitionError(FrnetError, ValueError):
    """Stratified partitioning is infeasible for the given labels."""


class LengthError(FormatError):
    """A binary payload is shorter or longer than its header declares."""


class ContentError(FormatError):
    """A binary container parsed but holds invalid values."""
