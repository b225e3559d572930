from typing import Optional


class ChangeDetectionError(Exception):
    """Base error. Carries the CLI exit code and the HTTP status it maps to."""

    exit_code: int = 1
    http_status: int = 500


# Configuration (exit 2)
class ConfigurationError(ChangeDetectionError):
    exit_code = 2
    http_status = 422


class InvalidInputError(ConfigurationError):
    pass


# Numeric failures (exit 3)
class NumericError(ChangeDetectionError):
    exit_code = 3
    http_status = 500


class NotPositiveDefiniteError(NumericError):
    pass


class NumericRankError(NumericError):
    pass


class FiducialSearchError(NumericError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


class InsufficientDataError(NumericError):
    pass


class CalibrationError(NumericError):
    def __init__(self, message: str, achieved_arl: Optional[float] = None, threshold: Optional[float] = None):
        super().__init__(message)
        self.achieved_arl = achieved_arl
        self.threshold = threshold


# Capacity / unsupported (exit 4)
class CapacityError(ChangeDetectionError):
    exit_code = 4
    http_status = 409


class UnsupportedError(ChangeDetectionError):
    exit_code = 4
    http_status = 409


class UnsupportedDimensionError(UnsupportedError):
    pass


class UnsupportedDegreeError(UnsupportedError):
    pass
