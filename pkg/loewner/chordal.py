"""
Reduction of closed isolines to chordal curves in the upper half plane.
"""

from typing import Optional, Tuple

import numpy as np

from config import LoewnerConfig
from contour import Contour, perimeter
from utils.logging import get_logger
from utils.validation import ChordalPreparationError

from .zipper import ChordalCurve

logger = get_logger(__name__)

Rect = Tuple[float, float, float, float]


def signed_area(vertices: np.ndarray) -> float:
    """Shoelace area of a closed polygon, positive when counterclockwise."""
    x, y = vertices[:, 0], vertices[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def resample_polyline(points: np.ndarray, spacing: float, max_points: Optional[int] = None) -> np.ndarray:
    """
    Resample an open polyline at equal arc-length steps, keeping both ends.

    Args:
        points: Array of shape (n, 2)
        spacing: Target step length
        max_points: Upper bound on the output size; the step grows to respect it

    Returns:
        Array of shape (m, 2)
    """
    seg = np.hypot(*np.diff(points, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = float(s[-1])
    if total <= 0:
        return points[:1].copy()
    n = int(np.floor(total / spacing)) + 1
    if max_points is not None and n > max_points:
        logger.debug(f"Decimating polyline of length {total:.4g} to {max_points} points")
        n = max_points
    n = max(n, 2)
    targets = np.linspace(0.0, total, n)
    keep = np.concatenate([[True], seg > 0])
    return np.column_stack([
        np.interp(targets, s[keep], points[keep, 0]),
        np.interp(targets, s[keep], points[keep, 1]),
    ])


def prepare_chordal(
    c: Contour,
    grid_window: Optional[Rect] = None,
    min_perimeter: float = 10.0,
    drop_fraction: float = 0.05,
    spacing: Optional[float] = None,
    max_points: int = 100_000
) -> ChordalCurve:
    """
    Cut a closed isoline into a chordal curve rooted at the origin.

    The loop is cut at its lowest vertex (ties broken by the smallest x), traversed
    counterclockwise and translated so the cut sits at the origin. The last
    ``drop_fraction`` of the arc length is discarded so the curve does not return to
    the real axis, and the rest is resampled at ``spacing``.

    Args:
        c: Closed contour
        grid_window: Window the contour was extracted from; contours reaching its edge are rejected
        min_perimeter: Minimal perimeter in units of L
        drop_fraction: Fraction of arc length removed at the end
        spacing: Resampling step; defaults to the median vertex spacing
        max_points: Upper bound on the number of points

    Returns:
        The chordal curve
    """
    if not c.closed or c.touches_boundary:
        raise ChordalPreparationError(
            f"Contour {c.contour_id} is not a closed interior loop",
            details={"contour_id": c.contour_id},
        )
    v = c.vertices
    if grid_window is not None:
        xmin, ymin, xmax, ymax = grid_window
        if v[:, 0].min() <= xmin or v[:, 1].min() <= ymin or v[:, 0].max() >= xmax or v[:, 1].max() >= ymax:
            raise ChordalPreparationError(
                f"Contour {c.contour_id} reaches the window boundary",
                details={"contour_id": c.contour_id},
            )
    p = perimeter(c)
    if p < min_perimeter:
        raise ChordalPreparationError(
            f"Contour {c.contour_id} is too short: P = {p:.3g} < {min_perimeter:.3g}",
            details={"contour_id": c.contour_id, "perimeter": p},
        )

    if signed_area(v) < 0:
        v = v[::-1]
    start = int(np.lexsort((v[:, 0], v[:, 1]))[0])
    loop = np.roll(v, -start, axis=0)
    loop = np.vstack([loop, loop[:1]]) - loop[0]

    seg = np.hypot(*np.diff(loop, axis=0).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    cut = (1.0 - drop_fraction) * s[-1]
    keep = s <= cut
    kept = loop[keep]
    if s[keep][-1] < cut:
        k = int(np.count_nonzero(keep))
        frac = (cut - s[k - 1]) / (s[k] - s[k - 1])
        kept = np.vstack([kept, loop[k - 1] + frac * (loop[k] - loop[k - 1])])

    if spacing is None:
        spacing = float(np.median(seg[seg > 0]))
    pts = resample_polyline(kept, spacing, max_points)

    # Re-root past leading points on the axis so only the root is real
    on_axis = pts[:, 1] <= 0.0
    lead = int(np.argmin(on_axis)) if not on_axis.all() else pts.shape[0]
    if lead >= pts.shape[0]:
        raise ChordalPreparationError(
            f"Contour {c.contour_id} does not rise above its lowest point",
            details={"contour_id": c.contour_id},
        )
    root = pts[lead - 1].copy()
    root[1] = 0.0
    pts = np.vstack([root, pts[lead:]])
    pts = pts[np.concatenate([[True], pts[1:, 1] > 0.0])]
    pts[:, 0] -= root[0]

    distinct = np.concatenate([[True], np.any(pts[1:] != pts[:-1], axis=1)])
    pts = pts[distinct]
    if pts.shape[0] < 3:
        raise ChordalPreparationError(
            f"Contour {c.contour_id} leaves fewer than 3 chordal points",
            details={"contour_id": c.contour_id},
        )
    return ChordalCurve.from_xy(pts)


def contraction_factors(
    cfg: LoewnerConfig,
    pixel_size: float,
    lambda_T: float
) -> Tuple[float, float]:
    """
    Per-axis factors applied before unzipping.

    ``L_over_rd`` contracts the y axis by r_d/L; ``exp_lambda_T`` stretches x by
    exp(lambda T) and contracts y by the same factor; ``custom`` uses the configured
    factors.

    Args:
        cfg: Loewner settings
        pixel_size: Resolution scale r_d in units of L
        lambda_T: Evolution time in units of 1/lambda

    Returns:
        (factor_x, factor_y)
    """
    if cfg.contraction == "none":
        return 1.0, 1.0
    if cfg.contraction == "L_over_rd":
        return 1.0, float(pixel_size)
    if cfg.contraction == "exp_lambda_T":
        f = float(np.exp(lambda_T))
        return f, 1.0 / f
    return cfg.factor_x, cfg.factor_y
