"""
Utility functions for the batchelor-isolines application.
"""

from .logging import setup_logging, get_logger, run_log
from .validation import (
    BatchelorError,
    ChordalPreparationError,
    ConfigurationError,
    DegenerateFitError,
    ErrorCode,
    InsufficientCountsError,
    InsufficientEnsembleError,
    InvalidInputError,
    LoewnerBreakdownError,
    NonFiniteStateError,
    SnapshotFormatError,
    require_finite,
    require_positive,
    sanitize_filename,
)

__all__ = [
    "setup_logging",
    "get_logger",
    "run_log",
    "BatchelorError",
    "ChordalPreparationError",
    "ConfigurationError",
    "DegenerateFitError",
    "ErrorCode",
    "InsufficientCountsError",
    "InsufficientEnsembleError",
    "InvalidInputError",
    "LoewnerBreakdownError",
    "NonFiniteStateError",
    "SnapshotFormatError",
    "require_finite",
    "require_positive",
    "sanitize_filename",
]
