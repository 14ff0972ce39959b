"""
Single-point statistics of a rendered field.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from utils.logging import get_logger
from utils.validation import InvalidInputError

from .render import FieldGrid

logger = get_logger(__name__)


@dataclass(frozen=True)
class FieldMoments:
    """Sample moments of the pixel values; skewness and kurtosis are None for a constant field."""
    mean: float
    variance: float
    skewness: Optional[float]
    excess_kurtosis: Optional[float]
    n_pixels: int

    @property
    def kurtosis_tolerance(self) -> float:
        """Sampling scale 5/sqrt(N) of the excess kurtosis."""
        return 5.0 / np.sqrt(self.n_pixels)


def field_moments(grid: FieldGrid) -> FieldMoments:
    """
    Unbiased sample mean, variance, skewness and excess kurtosis of a grid.

    Args:
        grid: Rendered field

    Returns:
        The moments
    """
    values = np.asarray(grid.values, dtype=float).ravel()
    if values.size < 4:
        raise InvalidInputError(f"field_moments needs at least 4 pixels, got {values.size}")
    mean = float(values.mean())
    variance = float(values.var(ddof=1))
    if variance <= 0.0 or np.ptp(values) == 0.0:
        logger.warning("Constant field: skewness and kurtosis are undefined")
        return FieldMoments(mean, 0.0, None, None, values.size)
    skew = float(stats.skew(values, bias=False))
    kurt = float(stats.kurtosis(values, fisher=True, bias=False))
    return FieldMoments(mean, variance, skew, kurt, values.size)
