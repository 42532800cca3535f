"""Exception hierarchy shared by every module."""


class I2SBError(Exception):
    """Base class for all library errors."""


class ConfigError(I2SBError, ValueError):
    """Invalid configuration value or missing field."""


class BoundsError(I2SBError, IndexError):
    """Step index outside the schedule."""


class DegenerateScheduleError(I2SBError, ValueError):
    """Total accumulated variance is zero where a posterior is requested."""


class SingularityError(I2SBError, ValueError):
    """Forward variance is zero where the OT-ODE velocity is requested."""


class InvalidStatisticsError(I2SBError, ValueError):
    """Second-moment statistics violate Cauchy-Schwarz."""


class ShapeError(I2SBError, ValueError):
    """Array shapes are incompatible."""


class CheckpointFormatError(I2SBError, ValueError):
    """Checkpoint bytes are malformed or do not match the architecture."""


class NonFiniteError(I2SBError, RuntimeError):
    """A loss or a sampler state became NaN or infinite."""
