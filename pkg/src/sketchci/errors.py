"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid parameters: bad dimensions, inconsistent split sizes, etc."""


class CalibrationError(RuntimeError):
    """Calibration cannot proceed (no scores, empty bins, too few groups)."""


class CapacityError(RuntimeError):
    """An exact enumeration would exceed its size gate."""
