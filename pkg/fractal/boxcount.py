"""
Arc-length box counting of polylines on a fixed-origin square lattice.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from contour import Contour
from utils.logging import get_logger
from utils.validation import InvalidInputError, require_finite

logger = get_logger(__name__)


@dataclass
class BoxCountCurve:
    """
    Box occupation probabilities of one curve over a ladder of box sizes.

    ``masses[k]`` holds p_i(eps_k) for the occupied boxes; ``epsilons`` is descending.
    """
    epsilons: np.ndarray
    masses: List[np.ndarray]
    n_boxes: np.ndarray
    origin: Tuple[float, float] = (0.0, 0.0)
    total_length: float = 0.0
    contour_id: int = field(default=-1, compare=False)

    def log_moment(self, q: float) -> np.ndarray:
        """
        log sum p^q per scale, or the entropy sum p log p for q = 1.

        Args:
            q: Order

        Returns:
            Array aligned with ``epsilons``
        """
        if q == 1:
            return np.array([float(np.sum(p * np.log(p))) for p in self.masses])
        if q == 0:
            return np.log(self.n_boxes.astype(float))
        return np.array([float(np.log(np.sum(p ** q))) for p in self.masses])


def epsilon_ladder(eps_min: float, eps_max: float, ratio: float = 2.0**0.5) -> np.ndarray:
    """
    Geometric ladder of box sizes from ``eps_max`` down to at least ``eps_min``.

    Args:
        eps_min: Smallest box size
        eps_max: Largest box size
        ratio: Ratio of consecutive sizes (> 1)

    Returns:
        Descending array of box sizes
    """
    if not (0 < eps_min <= eps_max) or ratio <= 1:
        raise InvalidInputError(
            f"Invalid ladder eps in [{eps_min}, {eps_max}] with ratio {ratio}"
        )
    n = int(np.floor(np.log(eps_max / eps_min) / np.log(ratio) + 1e-9)) + 1
    return eps_max / ratio ** np.arange(n)


def _segments(points: np.ndarray, closed: bool) -> Tuple[np.ndarray, np.ndarray]:
    p0 = points
    p1 = np.roll(points, -1, axis=0) if closed else points[1:]
    if not closed:
        p0 = points[:-1]
    lengths = np.hypot(*(p1 - p0).T)
    keep = lengths > 0
    return p0[keep], p1[keep]


def _lattice_crossings(
    f0: np.ndarray, f1: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """Segment ids and parameters t where segments cross integer lattice lines of one axis."""
    k0, k1 = np.floor(f0), np.floor(f1)
    count = np.abs(k1 - k0).astype(np.int64)
    total = int(count.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    seg = np.repeat(np.arange(f0.size), count)
    offset = np.arange(total) - np.repeat(np.cumsum(count) - count, count)
    line = np.repeat(np.minimum(k0, k1), count) + 1 + offset
    t = (line - f0[seg]) / (f1[seg] - f0[seg])
    return seg, np.clip(t, 0.0, 1.0)


def box_masses(
    p0: np.ndarray,
    p1: np.ndarray,
    epsilon: float,
    origin: Tuple[float, float] = (0.0, 0.0)
) -> np.ndarray:
    """
    Arc length of segments (p0[i], p1[i]) inside each occupied box of size ``epsilon``.

    Segments are clipped at every lattice line they cross; each piece is assigned to
    the box holding its midpoint.

    Args:
        p0: Segment starts, shape (n, 2)
        p1: Segment ends, shape (n, 2)
        epsilon: Box size
        origin: Lattice origin

    Returns:
        Lengths per occupied box (unordered)
    """
    n = p0.shape[0]
    if n == 0:
        return np.empty(0)
    o = np.asarray(origin, dtype=float)
    f0 = (p0 - o) / epsilon
    f1 = (p1 - o) / epsilon

    seg_x, t_x = _lattice_crossings(f0[:, 0], f1[:, 0])
    seg_y, t_y = _lattice_crossings(f0[:, 1], f1[:, 1])
    ids = np.arange(n)
    seg = np.concatenate([ids, ids, seg_x, seg_y])
    t = np.concatenate([np.zeros(n), np.ones(n), t_x, t_y])
    order = np.lexsort((t, seg))
    seg, t = seg[order], t[order]

    same = seg[1:] == seg[:-1]
    piece_seg = seg[1:][same]
    ta, tb = t[:-1][same], t[1:][same]
    lengths = (tb - ta) * np.hypot(*(p1 - p0).T)[piece_seg]
    positive = lengths > 0
    piece_seg, ta, tb, lengths = piece_seg[positive], ta[positive], tb[positive], lengths[positive]

    tm = 0.5 * (ta + tb)
    mid = f0[piece_seg] + tm[:, None] * (f1[piece_seg] - f0[piece_seg])
    boxes = np.floor(mid).astype(np.int64)
    _, inverse = np.unique(boxes, axis=0, return_inverse=True)
    return np.bincount(inverse.ravel(), weights=lengths)


def box_counts(
    c: Contour,
    epsilons: Sequence[float],
    origin: Optional[Tuple[float, float]] = None
) -> BoxCountCurve:
    """
    Arc-length box counting of a contour over a descending ladder of box sizes.

    Args:
        c: Contour with at least 2 vertices
        epsilons: Positive box sizes, sorted descending
        origin: Lattice origin; defaults to (0, 0)

    Returns:
        The box-count curve
    """
    eps = np.asarray(epsilons, dtype=float)
    if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
        raise InvalidInputError("epsilons must be positive and strictly descending")
    vertices = require_finite("contour vertices", c.vertices)
    if len(vertices) < 2:
        raise InvalidInputError("box_counts needs a contour with at least 2 vertices")
    origin = (0.0, 0.0) if origin is None else (float(origin[0]), float(origin[1]))

    p0, p1 = _segments(vertices, c.closed)
    total = float(np.hypot(*(p1 - p0).T).sum())
    if total <= 0:
        raise InvalidInputError("box_counts needs a contour of positive length")

    masses: List[np.ndarray] = []
    for e in eps:
        p = box_masses(p0, p1, float(e), origin) / total
        masses.append(p)
    n_boxes = np.array([m.size for m in masses], dtype=np.int64)
    return BoxCountCurve(
        epsilons=eps, masses=masses, n_boxes=n_boxes, origin=origin,
        total_length=total, contour_id=c.contour_id,
    )
