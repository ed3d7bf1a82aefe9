"""Exception hierarchy shared across the package."""


class CopError(Exception):
    """Base class for all errors raised by copconf."""


class ConfigError(CopError, ValueError):
    """Invalid configuration value."""


class StreamCorruptionError(CopError, ValueError):
    """A non-finite value entered a score or observation stream."""


class EstimatorUnreadyError(CopError):
    """A CDF estimator was queried before it had enough data."""


class EstimatorContractError(CopError, ValueError):
    """A CDF estimate returned a value outside [0, 1]."""


class IngestError(CopError, ValueError):
    """A data file could not be parsed."""
