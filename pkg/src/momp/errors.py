"""Exception hierarchy shared by all modules."""


class MompError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(MompError, ValueError):
    """Operand shapes do not line up."""


class ResourceError(MompError, MemoryError):
    """A dense construction would exceed its configured memory cap."""


class DegenerateProblemError(MompError, ArithmeticError):
    """No candidate atom has a usable (nonzero) effective column."""


class DomainError(MompError, ValueError):
    """An input lies outside the domain of the operation."""


class DecompositionError(MompError, ArithmeticError):
    """A matrix factorization failed, e.g. a rank-deficient combiner."""


class ConfigError(MompError, ValueError):
    """Invalid experiment or training configuration."""


class NoDetectionError(MompError):
    """The localization system has no usable solution for this path set."""
