"""
Effective diffusivity of driving-function ensembles.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from utils.logging import get_logger
from utils.validation import InsufficientEnsembleError, InvalidInputError

from .zipper import DrivingFunction

logger = get_logger(__name__)

# Default fit window as fractions of the common capacity span
DEFAULT_WINDOW_FRACTIONS = (0.05, 0.5)


@dataclass
class DiffusivityEstimate:
    """
    kappa from the growth of <xi^2(t)> over ``t_window``.

    ``ladder``, ``msd`` and ``msd_over_t`` hold the full ensemble curve; ``kappa_ratio``
    is the mean of <xi^2>/t over the window.
    """
    kappa: float
    stderr: float
    t_window: Tuple[float, float]
    ladder: np.ndarray
    msd: np.ndarray
    msd_over_t: np.ndarray
    n_contours: int
    kappa_ratio: float = 0.0

    @property
    def curve(self) -> np.ndarray:
        """Columns (t, <xi^2>, <xi^2>/t)."""
        return np.column_stack([self.ladder, self.msd, self.msd_over_t])


def resample_driving(driving: DrivingFunction, ladder: np.ndarray) -> np.ndarray:
    """xi(t) - xi(0) on a capacity-time ladder by linear interpolation."""
    return np.interp(ladder, driving.t, driving.xi - driving.xi[0])


def effective_diffusivity(
    drivings: Sequence[DrivingFunction],
    t_window: Optional[Tuple[float, float]] = None,
    n_ladder: int = 400
) -> DiffusivityEstimate:
    """
    Fit <xi^2(t)> = kappa t + c over an ensemble of driving functions.

    Drivings that end before the window closes are dropped. The standard error is the
    spread of the per-driving slopes.

    Args:
        drivings: Driving functions
        t_window: Capacity-time fit window; defaults to 5%-50% of the shortest span
        n_ladder: Number of ladder points

    Returns:
        The estimate, with kappa clamped at 0
    """
    if n_ladder < 4:
        raise InvalidInputError(f"n_ladder must be >= 4, got {n_ladder}")
    drivings = [d for d in drivings if len(d) >= 2]
    if t_window is not None:
        t_lo, t_hi = (float(v) for v in t_window)
        if not 0 <= t_lo < t_hi:
            raise InvalidInputError(f"Invalid capacity window [{t_lo}, {t_hi}]")
        reaching = [d for d in drivings if d.total_time >= t_hi]
        if len(reaching) < len(drivings):
            logger.info(f"{len(drivings) - len(reaching)} drivings end before t = {t_hi:.4g}")
        drivings = reaching
    if len(drivings) < 2:
        raise InsufficientEnsembleError(
            f"Need at least 2 drivings reaching the window, got {len(drivings)}",
            details={"n_drivings": len(drivings), "t_window": t_window},
        )

    span = min(d.total_time for d in drivings)
    if t_window is None:
        t_lo, t_hi = DEFAULT_WINDOW_FRACTIONS[0] * span, DEFAULT_WINDOW_FRACTIONS[1] * span
    t_max = t_hi if t_window is not None else span
    ladder = np.linspace(0.0, t_max, n_ladder + 1)[1:]
    paths = np.stack([resample_driving(d, ladder) for d in drivings])
    squares = paths ** 2
    msd = squares.mean(axis=0)
    ratio = msd / ladder

    inside = (ladder >= t_lo) & (ladder <= t_hi)
    if np.count_nonzero(inside) < 3:
        raise InvalidInputError("Fewer than 3 ladder points inside the capacity window")
    t_fit = ladder[inside]
    fit = stats.linregress(t_fit, msd[inside])
    per_driving = np.polyfit(t_fit, squares[:, inside].T, 1)[0]
    stderr = float(per_driving.std(ddof=1) / np.sqrt(per_driving.size))
    kappa = max(float(fit.slope), 0.0)
    estimate = DiffusivityEstimate(
        kappa=kappa, stderr=stderr, t_window=(float(t_lo), float(t_hi)),
        ladder=ladder, msd=msd, msd_over_t=ratio, n_contours=len(drivings),
        kappa_ratio=float(ratio[inside].mean()),
    )
    logger.info(
        f"kappa = {kappa:.3g} +- {stderr:.2g} from {len(drivings)} drivings "
        f"over t in [{t_lo:.3g}, {t_hi:.3g}]"
    )
    return estimate


def brownian_drivings(
    n: int,
    n_steps: int,
    t_max: float,
    kappa: float,
    seed: int = 0
) -> List[DrivingFunction]:
    """
    Sample driving functions xi = sqrt(kappa) B(t) on a uniform capacity grid.

    Args:
        n: Number of drivings
        n_steps: Steps per driving
        t_max: Final capacity time
        kappa: Diffusivity
        seed: RNG seed

    Returns:
        The drivings
    """
    if n < 1 or n_steps < 1 or t_max <= 0 or kappa < 0:
        raise InvalidInputError("brownian_drivings needs n, n_steps >= 1, t_max > 0, kappa >= 0")
    rng = np.random.default_rng(seed)
    t = np.linspace(0.0, t_max, n_steps + 1)
    dt = t_max / n_steps
    increments = rng.standard_normal((n, n_steps)) * np.sqrt(kappa * dt)
    xi = np.concatenate([np.zeros((n, 1)), np.cumsum(increments, axis=1)], axis=1)
    return [DrivingFunction(t=t, xi=row, contour_id=i) for i, row in enumerate(xi)]


def increment_autocorrelation(driving: DrivingFunction, n_lags: int = 20, n_ladder: int = 400) -> np.ndarray:
    """
    Autocorrelation of driving increments on a uniform capacity ladder.

    Args:
        driving: Driving function
        n_lags: Largest lag, in ladder steps
        n_ladder: Number of ladder steps

    Returns:
        Array of length n_lags + 1 starting with 1 at lag 0
    """
    if n_lags < 1 or n_ladder <= n_lags + 1:
        raise InvalidInputError("increment_autocorrelation needs 1 <= n_lags < n_ladder - 1")
    ladder = np.linspace(0.0, driving.total_time, n_ladder + 1)
    d = np.diff(resample_driving(driving, ladder))
    d = d - d.mean()
    var = float(np.dot(d, d))
    if var == 0.0:
        return np.concatenate([[1.0], np.zeros(n_lags)])
    acf = np.array([np.dot(d[: d.size - k], d[k:]) / var for k in range(n_lags + 1)])
    return acf
