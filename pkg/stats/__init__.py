"""
Stats module: log-binned PDFs of contour sizes and their tail fits.
"""

from .histogram import (
    MIN_BINS,
    LogHistogram,
    ModeEstimate,
    find_modes,
    histogram_log,
    merge_histograms,
    mode_location,
)
from .tails import (
    MIN_WINDOW_COUNTS,
    TailFit,
    TailKind,
    fit_left_tail,
    fit_poisson_overlay,
    fit_right_tail,
    poisson_prediction,
)

__all__ = [
    "MIN_BINS",
    "MIN_WINDOW_COUNTS",
    "LogHistogram",
    "ModeEstimate",
    "TailFit",
    "TailKind",
    "find_modes",
    "fit_left_tail",
    "fit_poisson_overlay",
    "fit_right_tail",
    "histogram_log",
    "merge_histograms",
    "mode_location",
    "poisson_prediction",
]
