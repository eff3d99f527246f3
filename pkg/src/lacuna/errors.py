"""Exception types raised across the package."""


class LacunaError(ValueError):
    """Base class for all domain errors."""


class ResolutionError(LacunaError):
    """An object does not fit on the requested dyadic grid."""


class FrequencyError(ResolutionError):
    """A Walsh frequency is at or beyond ``2**N``."""


class EmptySequenceError(LacunaError):
    """No sequence terms survive at the requested resolution."""


class PreconditionError(LacunaError):
    """An input violates a documented precondition."""


class ConfigError(LacunaError):
    """An experiment configuration is invalid."""
