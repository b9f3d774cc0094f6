"""Exception types shared across the package."""


class CorfuseError(Exception):
    """Base class for errors raised by this package."""


class PropagationError(CorfuseError):
    """State propagation produced a non-finite value."""


class MeasurementRejected(CorfuseError):
    """A measurement vector was rejected before the correction step."""


class AdaptationNotReady(CorfuseError):
    """A noise estimate was requested before enough data was buffered."""


class ConfigError(CorfuseError):
    """A run configuration failed validation."""


class DataError(CorfuseError):
    """A dataset file is missing, malformed, or inconsistent."""
