"""
Generalized dimensions D_q from box-count curves.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
from scipy import stats

from utils.logging import get_logger
from utils.validation import DegenerateFitError, InvalidInputError

from .boxcount import BoxCountCurve

logger = get_logger(__name__)

# Minimum number of scales inside a fit window
MIN_FIT_SCALES = 4

_WINDOW_TOL = 1e-9


@dataclass(frozen=True)
class DimensionEstimate:
    """D_q fitted over [scale_lo, scale_hi] with its regression standard error."""
    q: float
    scale_lo: float
    scale_hi: float
    D_q: float
    stderr: float
    n_scales: int = 0


@dataclass(frozen=True)
class EnsembleDimension:
    """
    Ensemble average of per-contour D_q.

    ``spread_stderr`` is the standard error of the per-contour values and
    ``fit_stderr`` the mean regression error; they are kept apart.
    """
    q: float
    scale_lo: float
    scale_hi: float
    D_q: float
    spread_stderr: float
    fit_stderr: float
    n_contours: int

    @property
    def stderr(self) -> float:
        """Combined error."""
        return float(np.hypot(self.spread_stderr, self.fit_stderr))


def _abscissa(curve: BoxCountCurve, q: float) -> np.ndarray:
    log_eps = np.log(curve.epsilons)
    return log_eps if q == 1 else (q - 1.0) * log_eps


def generalized_dimension(
    curve: BoxCountCurve,
    q: float,
    scale_lo: float,
    scale_hi: float
) -> DimensionEstimate:
    """
    Least-squares D_q over the scales inside [scale_lo, scale_hi].

    The slope of log sum p^q against (q-1) log eps; for q = 1 the slope of
    sum p log p against log eps.

    Args:
        curve: Box-count curve
        q: Order
        scale_lo: Smallest box size of the window
        scale_hi: Largest box size of the window

    Returns:
        The estimate with the slope standard error
    """
    if scale_lo > scale_hi:
        raise InvalidInputError(f"Empty fit window [{scale_lo}, {scale_hi}]")
    eps = curve.epsilons
    inside = (eps >= scale_lo * (1 - _WINDOW_TOL)) & (eps <= scale_hi * (1 + _WINDOW_TOL))
    n = int(np.count_nonzero(inside))
    if n < MIN_FIT_SCALES:
        raise DegenerateFitError(
            f"Only {n} scales inside [{scale_lo:.4g}, {scale_hi:.4g}], need {MIN_FIT_SCALES}",
            details={"q": q, "n_scales": n},
        )
    x = _abscissa(curve, q)[inside]
    y = curve.log_moment(q)[inside]
    if np.ptp(x) == 0:
        raise DegenerateFitError("No spread in log scale inside the fit window", details={"q": q})
    fit = stats.linregress(x, y)
    return DimensionEstimate(
        q=float(q), scale_lo=float(scale_lo), scale_hi=float(scale_hi),
        D_q=float(fit.slope), stderr=float(fit.stderr), n_scales=n,
    )


def local_slope(curve: BoxCountCurve, q: float) -> List[Tuple[float, float]]:
    """
    Centered finite-difference slope of the log-log curve at each interior scale.

    Args:
        curve: Box-count curve with at least 3 scales
        q: Order

    Returns:
        (scale, local D_q) pairs
    """
    if curve.epsilons.size < 3:
        raise InvalidInputError("local_slope needs at least 3 scales")
    x = _abscissa(curve, q)
    y = curve.log_moment(q)
    slopes = (y[2:] - y[:-2]) / (x[2:] - x[:-2])
    return list(zip(curve.epsilons[1:-1].tolist(), slopes.tolist()))


def ensemble_dimension(
    curves: Sequence[BoxCountCurve],
    q: float,
    scale_lo: float,
    scale_hi: float
) -> EnsembleDimension:
    """
    Average D_q over an ensemble of curves; curves with degenerate fits are skipped.

    Args:
        curves: Box-count curves
        q: Order
        scale_lo: Smallest box size of the window
        scale_hi: Largest box size of the window

    Returns:
        The ensemble estimate
    """
    estimates: List[DimensionEstimate] = []
    for curve in curves:
        try:
            estimates.append(generalized_dimension(curve, q, scale_lo, scale_hi))
        except DegenerateFitError as e:
            logger.debug(f"Skipping contour {curve.contour_id}: {e.message}")
    if not estimates:
        raise DegenerateFitError(
            f"No curve supports a D_{q:g} fit over [{scale_lo:.4g}, {scale_hi:.4g}]",
            details={"q": q, "n_curves": len(curves)},
        )
    values = np.array([e.D_q for e in estimates])
    spread = float(values.std(ddof=1) / np.sqrt(values.size)) if values.size > 1 else 0.0
    fit_err = float(np.mean([e.stderr for e in estimates]))
    return EnsembleDimension(
        q=float(q), scale_lo=float(scale_lo), scale_hi=float(scale_hi),
        D_q=float(values.mean()), spread_stderr=spread, fit_stderr=fit_err,
        n_contours=int(values.size),
    )
