"""
Histograms in log(x/L) and mode location.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.signal import find_peaks

from utils.logging import get_logger
from utils.validation import InsufficientCountsError, InvalidInputError, require_finite

logger = get_logger(__name__)

MIN_BINS = 10
MIN_MODE_COUNTS = 10

# Peaks lower than this fraction of the main peak are not reported as modes
_SECONDARY_PROMINENCE = 0.15


@dataclass
class LogHistogram:
    """
    PDF per unit natural log of x/L, with the raw counts kept for merging and fits.
    """
    bin_edges: np.ndarray
    counts: np.ndarray
    n_total: int = 0
    densities: np.ndarray = field(init=False)

    def __post_init__(self) -> None:
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.size != self.bin_edges.size - 1:
            raise InvalidInputError("counts must have one entry per bin")
        if np.any(self.counts < 0):
            raise InvalidInputError("counts must be non-negative")
        self.n_total = int(self.counts.sum())
        widths = np.diff(self.bin_edges)
        if self.n_total > 0:
            self.densities = self.counts / (self.n_total * widths)
        else:
            self.densities = np.zeros(self.counts.size)

    @property
    def centers(self) -> np.ndarray:
        """Bin centers in log(x/L)."""
        return 0.5 * (self.bin_edges[1:] + self.bin_edges[:-1])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def density_errors(self) -> np.ndarray:
        """Poisson standard error of each density."""
        if self.n_total == 0:
            return np.zeros(self.counts.size)
        return np.sqrt(self.counts) / (self.n_total * self.widths)

    def integral(self) -> float:
        """Integral of the PDF over log x; 1 for any non-empty histogram."""
        return float(np.sum(self.densities * self.widths))


def histogram_log(
    values: Sequence[float],
    n_bins: int = 40,
    log_range: Optional[Tuple[float, float]] = None
) -> LogHistogram:
    """
    Equal-width histogram of log(x/L), normalized per unit log x.

    Args:
        values: Positive samples in units of L
        n_bins: Number of bins (>= 10)
        log_range: Fixed (lo, hi) in log units; defaults to the sample span

    Returns:
        The histogram
    """
    x = require_finite("values", np.asarray(values, dtype=float).ravel())
    if n_bins < MIN_BINS:
        raise InvalidInputError(f"n_bins must be >= {MIN_BINS}, got {n_bins}")
    if x.size and np.any(x <= 0):
        raise InvalidInputError("histogram_log needs positive values")
    logs = np.log(x)
    if log_range is None:
        if x.size == 0:
            lo, hi = -0.5, 0.5
        else:
            lo, hi = float(logs.min()), float(logs.max())
        if hi - lo <= 0:
            lo, hi = lo - 0.5, hi + 0.5
    else:
        lo, hi = (float(v) for v in log_range)
        if hi <= lo:
            raise InvalidInputError(f"Empty log range [{lo}, {hi}]")
    counts, edges = np.histogram(logs, bins=n_bins, range=(lo, hi))
    return LogHistogram(bin_edges=edges, counts=counts)


def merge_histograms(histograms: Sequence[LogHistogram]) -> LogHistogram:
    """
    Add the counts of histograms sharing the same bin edges.

    Args:
        histograms: Non-empty sequence with identical edges

    Returns:
        The merged histogram
    """
    if not histograms:
        raise InvalidInputError("merge_histograms needs at least one histogram")
    edges = histograms[0].bin_edges
    for h in histograms[1:]:
        if h.bin_edges.shape != edges.shape or not np.array_equal(h.bin_edges, edges):
            raise InvalidInputError("Histograms have different bin edges")
    counts = np.sum([h.counts for h in histograms], axis=0)
    return LogHistogram(bin_edges=edges.copy(), counts=counts)


@dataclass(frozen=True)
class ModeEstimate:
    """
    Location of the main PDF maximum.

    ``location`` is in units of L; ``secondary`` lists other significant maxima.
    """
    location: float
    log_location: float
    multimodal: bool
    secondary: List[float] = field(default_factory=list)


def find_modes(h: LogHistogram, mask_below: Optional[float] = None) -> List[int]:
    """
    Bin indices of significant local maxima, highest first.

    Args:
        h: Histogram
        mask_below: Ignore bins centered below this x (units of L)

    Returns:
        Indices into ``h.densities``
    """
    d = h.densities.copy()
    if mask_below is not None:
        d[h.centers < np.log(mask_below)] = 0.0
    if not np.any(d > 0):
        return []
    padded = np.concatenate([[0.0], d, [0.0]])
    peaks, _ = find_peaks(padded, prominence=_SECONDARY_PROMINENCE * d.max())
    order = np.argsort(-padded[peaks], kind="stable")
    return [int(p - 1) for p in peaks[order]]


def mode_location(h: LogHistogram, mask_below: Optional[float] = None) -> ModeEstimate:
    """
    Locate the PDF maximum by parabolic interpolation around the highest bin.

    Args:
        h: Histogram
        mask_below: Ignore bins centered below this x, e.g. a diffusion-scale peak

    Returns:
        The mode, flagged when other significant maxima exist
    """
    if h.n_total < MIN_MODE_COUNTS:
        raise InsufficientCountsError(
            f"Mode needs at least {MIN_MODE_COUNTS} samples, got {h.n_total}",
            details={"n_total": h.n_total},
        )
    modes = find_modes(h, mask_below)
    if not modes:
        raise InsufficientCountsError("No occupied bins above the mask")
    k = modes[0]
    d = h.densities
    u = float(h.centers[k])
    if 0 < k < d.size - 1:
        denom = d[k - 1] - 2.0 * d[k] + d[k + 1]
        if denom < 0:
            shift = 0.5 * (d[k - 1] - d[k + 1]) / denom
            u += float(np.clip(shift, -0.5, 0.5)) * float(h.widths[k])
    secondary = [float(np.exp(h.centers[j])) for j in modes[1:]]
    if secondary:
        logger.info(
            f"PDF is multimodal: main maximum at {np.exp(u):.3g}, "
            f"secondary at {', '.join(f'{s:.3g}' for s in secondary)}"
        )
    return ModeEstimate(
        location=float(np.exp(u)), log_location=u, multimodal=bool(secondary), secondary=secondary
    )
