"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration, dimensions, or incompatible artifacts."""


class CalibrationError(RuntimeError):
    """Calibration refused (e.g. too few samples for the requested bound)."""
