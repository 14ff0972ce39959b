"""
Per-contour geometry: perimeter, mean radius, gyration radius and bounding-box aspect.
"""

from typing import Literal, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from utils.logging import get_logger
from utils.validation import InvalidInputError

from .marching import Contour

logger = get_logger(__name__)


def perimeter(c: Contour) -> float:
    """
    Total polyline length, including the closing segment of closed contours.

    Args:
        c: Contour with at least 2 vertices

    Returns:
        The perimeter
    """
    if len(c) < 2:
        raise InvalidInputError("perimeter needs at least 2 vertices")
    return float(np.hypot(*c.segments.T).sum())


def arc_weights(c: Contour) -> np.ndarray:
    """Half the length of the segments adjacent to each vertex."""
    lengths = np.hypot(*c.segments.T)
    w = np.zeros(len(c))
    if c.closed:
        w += 0.5 * lengths
        w += 0.5 * np.roll(lengths, 1)
    else:
        w[:-1] += 0.5 * lengths
        w[1:] += 0.5 * lengths
    return w


def mean_radius(c: Contour, weighting: Literal["arc", "vertex"] = "arc") -> float:
    """
    Root-mean-square distance of the contour points from their centroid.

    With ``arc`` weighting every vertex counts with its adjacent arc length, so the
    value hardly depends on how densely the curve is sampled; ``vertex`` weighting
    averages over vertices uniformly.

    Args:
        c: Contour with at least 3 vertices
        weighting: ``arc`` or ``vertex``

    Returns:
        The mean radius R
    """
    if len(c) < 3:
        raise InvalidInputError("mean_radius needs at least 3 vertices")
    if weighting == "arc":
        w = arc_weights(c)
        if w.sum() <= 0:
            return 0.0
    elif weighting == "vertex":
        w = np.ones(len(c))
    else:
        raise InvalidInputError(f"Unknown weighting {weighting!r}")
    w = w / w.sum()
    centroid = w @ c.vertices
    d2 = ((c.vertices - centroid) ** 2).sum(axis=1)
    return float(np.sqrt(w @ d2))


def _hull(points: np.ndarray) -> Optional[np.ndarray]:
    """Counterclockwise convex hull vertices, or None for degenerate point sets."""
    try:
        hull = ConvexHull(points)
    except (QhullError, ValueError):
        return None
    return points[hull.vertices]


def _principal_extent(points: np.ndarray) -> float:
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    proj = centered @ vt[0]
    return float(np.ptp(proj))


def diameter(points: np.ndarray) -> float:
    """
    Maximal pairwise distance of a point set, by rotating calipers on its hull.

    Args:
        points: Array of shape (n, 2)

    Returns:
        The diameter
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    if len(points) < 4:
        d = points[:, None, :] - points[None, :, :]
        return float(np.sqrt((d ** 2).sum(axis=-1).max()))
    hull = _hull(points)
    if hull is None:
        return _principal_extent(points)

    n = len(hull)
    best = 0.0
    j = 1

    def twice_area(a: np.ndarray, b: np.ndarray, p: np.ndarray) -> float:
        return abs((b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]))

    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        # Advance to the vertex farthest from edge (a, b)
        while twice_area(a, b, hull[(j + 1) % n]) > twice_area(a, b, hull[j]):
            j = (j + 1) % n
        for p in (a, b):
            d = float(np.hypot(*(hull[j] - p)))
            if d > best:
                best = d
    return best


def gyration_radius(c: Contour) -> float:
    """
    Half the maximal distance between two contour vertices.

    Args:
        c: Contour with at least 2 vertices

    Returns:
        The gyration radius
    """
    if len(c) < 2:
        raise InvalidInputError("gyration_radius needs at least 2 vertices")
    return 0.5 * diameter(c.vertices)


def minimum_bounding_rectangle(points: np.ndarray) -> Tuple[float, float, float]:
    """
    Minimum-area enclosing rectangle over the hull edge directions.

    Args:
        points: Array of shape (n, 2)

    Returns:
        (long side, short side, angle of the long side)
    """
    points = np.asarray(points, dtype=float)
    hull = _hull(points) if len(points) >= 3 else None
    if hull is None:
        return _principal_extent(points), 0.0, 0.0
    edges = np.roll(hull, -1, axis=0) - hull
    angles = np.unique(np.mod(np.arctan2(edges[:, 1], edges[:, 0]), np.pi / 2))
    cos, sin = np.cos(angles), np.sin(angles)
    u = hull @ np.stack([cos, sin])
    v = hull @ np.stack([-sin, cos])
    width = u.max(axis=0) - u.min(axis=0)
    height = v.max(axis=0) - v.min(axis=0)
    k = int(np.argmin(width * height))
    if width[k] >= height[k]:
        return float(width[k]), float(height[k]), float(angles[k])
    return float(height[k]), float(width[k]), float(angles[k] + np.pi / 2)


def bounding_aspect_ratio(c: Contour) -> float:
    """
    Long over short side of the minimum-area bounding rectangle; infinite for straight contours.

    Args:
        c: Contour with at least 2 vertices

    Returns:
        The aspect ratio (>= 1)
    """
    if len(c) < 2:
        raise InvalidInputError("bounding_aspect_ratio needs at least 2 vertices")
    long_side, short_side, _ = minimum_bounding_rectangle(c.vertices)
    if short_side <= 0:
        return float("inf")
    return long_side / short_side
