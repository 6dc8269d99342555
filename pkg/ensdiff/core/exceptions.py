"""
Custom exceptions for ensdiff.
"""

from typing import Optional, Any, Dict


class EnsDiffException(Exception):
    """Base exception for all ensdiff errors."""

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ParameterError(EnsDiffException):
    """Raised when a parameter violates an operation's precondition."""
    pass


class RangeError(ParameterError):
    """Raised when a time index falls outside the schedule."""
    pass


class ShapeError(EnsDiffException):
    """Raised when grid or vector shapes do not match."""
    pass


class NumericalError(EnsDiffException):
    """Raised on non-finite values or divergence."""
    pass


class TrainingError(NumericalError):
    """Raised when training produces a non-finite loss."""
    pass


class FormatError(EnsDiffException):
    """Raised when a binary artifact is malformed."""
    pass


class ConfigurationError(EnsDiffException):
    """Raised when configuration is invalid."""
    pass
