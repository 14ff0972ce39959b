"""
Tail fits of log-binned PDFs.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from utils.logging import get_logger
from utils.validation import InsufficientCountsError, InvalidInputError, require_positive

from .histogram import LogHistogram

logger = get_logger(__name__)

MIN_WINDOW_COUNTS = 50


class TailKind(str, Enum):
    """Functional forms fitted to PDF tails."""
    POWER_LAW_LEFT = "power-law-left"
    POWER_LAW_RIGHT = "power-law-right"
    LOG_NORMAL_RIGHT = "log-normal-right"
    POISSON_PREDICTION = "poisson-prediction"


@dataclass(frozen=True)
class TailFit:
    """
    Result of a tail fit over ``window`` (units of L).

    For power laws PDF(x) ~ x^exponent; for the log-normal form ``mu`` and ``sigma``
    describe log(x/L). ``residual`` is the count-weighted RMS misfit in log density.
    """
    kind: TailKind
    window: Tuple[float, float]
    stderr: float
    residual: float
    n_counts: int
    n_bins: int
    exponent: Optional[float] = None
    mu: Optional[float] = None
    sigma: Optional[float] = None


def _window_bins(h: LogHistogram, window: Tuple[float, float], min_bins: int) -> np.ndarray:
    x_lo, x_hi = (float(v) for v in window)
    if not (0 < x_lo < x_hi):
        raise InvalidInputError(f"Invalid tail window [{x_lo}, {x_hi}]")
    u = h.centers
    inside = (u >= np.log(x_lo)) & (u <= np.log(x_hi))
    n_counts = int(h.counts[inside].sum())
    if n_counts < MIN_WINDOW_COUNTS:
        raise InsufficientCountsError(
            f"Window [{x_lo:.3g}, {x_hi:.3g}] holds {n_counts} counts, need {MIN_WINDOW_COUNTS}",
            details={"window": (x_lo, x_hi), "n_counts": n_counts},
        )
    occupied = inside & (h.counts > 0)
    if np.count_nonzero(occupied) < min_bins:
        raise InsufficientCountsError(
            f"Window [{x_lo:.3g}, {x_hi:.3g}] has {np.count_nonzero(occupied)} occupied bins, "
            f"need {min_bins}",
            details={"window": (x_lo, x_hi)},
        )
    return occupied


def _weighted_fit(u: np.ndarray, y: np.ndarray, w: np.ndarray, deg: int) -> Tuple[np.ndarray, np.ndarray, float]:
    coef, cov = np.polyfit(u, y, deg, w=w, cov=True)
    resid = y - np.polyval(coef, u)
    rms = float(np.sqrt(np.sum((w * resid) ** 2) / np.sum(w ** 2)))
    return coef, cov, rms


def _power_law(h: LogHistogram, window: Tuple[float, float], kind: TailKind) -> TailFit:
    sel = _window_bins(h, window, min_bins=4)
    u = h.centers[sel]
    y = np.log(h.densities[sel])
    w = np.sqrt(h.counts[sel].astype(float))
    coef, cov, rms = _weighted_fit(u, y, w, 1)
    # Density per unit log x scales as x^(a+1)
    return TailFit(
        kind=kind, window=(float(window[0]), float(window[1])),
        stderr=float(np.sqrt(cov[0, 0])), residual=rms,
        n_counts=int(h.counts[sel].sum()), n_bins=int(sel.sum()),
        exponent=float(coef[0] - 1.0),
    )


def fit_left_tail(h: LogHistogram, window: Tuple[float, float]) -> TailFit:
    """
    Fit PDF(x) ~ x^a below the distribution mode.

    Args:
        h: Histogram in log(x/L)
        window: (x_lo, x_hi) in units of L

    Returns:
        Fit with the exponent a
    """
    return _power_law(h, window, TailKind.POWER_LAW_LEFT)


def fit_right_tail(
    h: LogHistogram,
    window: Tuple[float, float],
    kind: TailKind = TailKind.POWER_LAW_RIGHT
) -> TailFit:
    """
    Fit the right tail as a power law or a log-normal.

    The log-normal form fits a parabola to log density versus log x.

    Args:
        h: Histogram in log(x/L)
        window: (x_lo, x_hi) in units of L
        kind: ``power-law-right`` or ``log-normal-right``

    Returns:
        The fit
    """
    kind = TailKind(kind)
    if kind == TailKind.POWER_LAW_RIGHT:
        return _power_law(h, window, kind)
    if kind != TailKind.LOG_NORMAL_RIGHT:
        raise InvalidInputError(f"fit_right_tail does not fit {kind.value}")

    sel = _window_bins(h, window, min_bins=5)
    u = h.centers[sel]
    y = np.log(h.densities[sel])
    w = np.sqrt(h.counts[sel].astype(float))
    coef, cov, rms = _weighted_fit(u, y, w, 2)
    a2, a1 = float(coef[0]), float(coef[1])
    if a2 >= 0:
        raise InsufficientCountsError(
            "Log density is not concave over the window; no log-normal fit",
            details={"window": tuple(window), "curvature": a2},
        )
    var = -0.5 / a2
    mu = a1 * var
    sigma = float(np.sqrt(var))
    # d sigma / d a2 = sigma / (-2 a2)
    sigma_err = float(abs(sigma / (2.0 * a2)) * np.sqrt(cov[0, 0]))
    return TailFit(
        kind=kind, window=(float(window[0]), float(window[1])),
        stderr=sigma_err, residual=rms,
        n_counts=int(h.counts[sel].sum()), n_bins=int(sel.sum()),
        mu=float(mu), sigma=sigma,
    )


def poisson_prediction(nu_over_lambda: float) -> float:
    """
    Size-tail exponent -1 - nu/lambda from Poisson blob ages and exponential growth.

    Args:
        nu_over_lambda: Pumping rate over the Lyapunov exponent (> 0)

    Returns:
        The exponent
    """
    return -1.0 - require_positive("nu/lambda", nu_over_lambda)


def fit_poisson_overlay(
    h: LogHistogram,
    window: Tuple[float, float],
    nu_over_lambda: float
) -> TailFit:
    """
    Overlay the Poisson prediction with only its amplitude free and report the misfit.

    Args:
        h: Histogram in log(x/L)
        window: (x_lo, x_hi) in units of L
        nu_over_lambda: Pumping rate over the Lyapunov exponent

    Returns:
        Fit whose ``residual`` compares with the other right-tail forms
    """
    exponent = poisson_prediction(nu_over_lambda)
    sel = _window_bins(h, window, min_bins=2)
    u = h.centers[sel]
    y = np.log(h.densities[sel])
    w = np.sqrt(h.counts[sel].astype(float))
    shifted = y - (exponent + 1.0) * u
    intercept = float(np.sum(w ** 2 * shifted) / np.sum(w ** 2))
    resid = shifted - intercept
    rms = float(np.sqrt(np.sum((w * resid) ** 2) / np.sum(w ** 2)))
    return TailFit(
        kind=TailKind.POISSON_PREDICTION, window=(float(window[0]), float(window[1])),
        stderr=0.0, residual=rms,
        n_counts=int(h.counts[sel].sum()), n_bins=int(sel.sum()),
        exponent=exponent,
    )
