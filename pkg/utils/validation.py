"""
Error types and validation utilities for the batchelor-isolines application.
"""

import re
from enum import Enum
from typing import Any, Dict, Optional, Union

import numpy as np


class ErrorCode(str, Enum):
    """Error codes for pipeline errors."""
    INVALID_INPUT = "invalid_input"
    NON_FINITE = "non_finite"
    DEGENERATE_FIT = "degenerate_fit"
    INSUFFICIENT_COUNTS = "insufficient_counts"
    INSUFFICIENT_ENSEMBLE = "insufficient_ensemble"
    LOEWNER_BREAKDOWN = "loewner_breakdown"
    CHORDAL_PREPARATION = "chordal_preparation"
    INVALID_CONFIG = "invalid_config"
    SNAPSHOT_FORMAT = "snapshot_format"


class BatchelorError(Exception):
    """Base class for all errors raised by the pipeline."""

    default_code: ErrorCode = ErrorCode.INVALID_INPUT

    def __init__(
        self,
        message: str,
        error_code: Optional[Union[ErrorCode, str]] = None,
        details: Optional[Dict[str, Any]] = None
    ):
        """Initialize a pipeline error."""
        self.message = message
        self.error_code = error_code or self.default_code
        self.details = details or {}
        super().__init__(message)


class InvalidInputError(BatchelorError, ValueError):
    """An argument violates an operation's precondition."""
    default_code = ErrorCode.INVALID_INPUT


class NonFiniteStateError(BatchelorError, FloatingPointError):
    """A matrix, grid or curve contains NaN or infinite entries."""
    default_code = ErrorCode.NON_FINITE


class DegenerateFitError(BatchelorError):
    """A regression has too few points or no spread in its abscissa."""
    default_code = ErrorCode.DEGENERATE_FIT


class InsufficientCountsError(BatchelorError):
    """A histogram window holds fewer counts than the fit requires."""
    default_code = ErrorCode.INSUFFICIENT_COUNTS


class InsufficientEnsembleError(BatchelorError):
    """Too few driving functions reach the requested capacity window."""
    default_code = ErrorCode.INSUFFICIENT_ENSEMBLE


class LoewnerBreakdownError(BatchelorError):
    """The zipper lost monotone capacity; ``details['step']`` holds the step index."""
    default_code = ErrorCode.LOEWNER_BREAKDOWN


class ChordalPreparationError(BatchelorError):
    """A contour cannot be reduced to a chordal curve."""
    default_code = ErrorCode.CHORDAL_PREPARATION


class ConfigurationError(BatchelorError):
    """An experiment configuration is missing or invalid."""
    default_code = ErrorCode.INVALID_CONFIG


class SnapshotFormatError(BatchelorError):
    """A snapshot, checkpoint or contour file cannot be decoded."""
    default_code = ErrorCode.SNAPSHOT_FORMAT


def require_finite(name: str, value: Any) -> np.ndarray:
    """
    Check that an array-like holds only finite values.

    Args:
        name: Name used in the error message
        value: The array-like to check

    Returns:
        The value as a numpy array

    Raises:
        NonFiniteStateError: If any entry is NaN or infinite
    """
    arr = np.asarray(value)
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise NonFiniteStateError(
            f"{name} has {bad} non-finite entries", details={"name": name, "count": bad}
        )
    return arr


def require_positive(name: str, value: float, allow_zero: bool = False) -> float:
    """
    Check that a scalar is positive (or non-negative).

    Args:
        name: Name used in the error message
        value: The scalar to check
        allow_zero: Whether zero is accepted

    Returns:
        The value as a float
    """
    value = float(value)
    if not np.isfinite(value) or value < 0 or (value == 0 and not allow_zero):
        bound = ">= 0" if allow_zero else "> 0"
        raise InvalidInputError(f"{name} must be {bound}, got {value}", details={name: value})
    return value


def sanitize_filename(filename: str) -> str:
    """
    Sanitize a filename to ensure it's valid across operating systems.

    Args:
        filename: The filename to sanitize

    Returns:
        Sanitized filename
    """
    # Replace invalid characters with underscores
    sanitized = re.sub(r'[\\/*?:"<>|\s]', '_', filename)
    # Replace multiple underscores with a single one
    sanitized = re.sub(r'_+', '_', sanitized)
    sanitized = sanitized.strip('_')
    if not sanitized:
        sanitized = "unnamed"

    return sanitized
