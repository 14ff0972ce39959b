"""
Marching-squares extraction of level sets from a rendered field.
"""

from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from scalar.render import FieldGrid
from utils.logging import get_logger
from utils.validation import InvalidInputError, require_finite

logger = get_logger(__name__)


@dataclass
class Contour:
    """
    One level-set polyline.

    ``vertices`` has shape (n, 2); a closed contour does not repeat its first vertex.
    Open contours end on the grid boundary and carry ``touches_boundary``.
    """
    vertices: np.ndarray
    closed: bool
    level: float = 0.0
    touches_boundary: bool = False
    contour_id: int = field(default=-1, compare=False)

    def __post_init__(self) -> None:
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if self.closed and len(self.vertices) < 3:
            raise InvalidInputError("A closed contour needs at least 3 vertices")

    def __len__(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def segments(self) -> np.ndarray:
        """Segment vectors, including the closing one for closed contours."""
        v = self.vertices
        if self.closed:
            return np.roll(v, -1, axis=0) - v
        return np.diff(v, axis=0)


def _drop_repeats(points: np.ndarray, closed: bool) -> np.ndarray:
    if len(points) < 2:
        return points
    keep = np.ones(len(points), dtype=bool)
    keep[1:] = np.any(points[1:] != points[:-1], axis=1)
    points = points[keep]
    if closed and len(points) > 1 and np.all(points[0] == points[-1]):
        points = points[:-1]
    return points


class MarchingSquares:
    """
    Level-set tracer on the lattice of pixel centers.

    A lattice point is above the level when its value is strictly greater. Saddle
    cells (four crossings) are split by the sign of the cell-center average, which
    keeps every contour simple: each lattice edge carries at most one crossing and
    joins at most two segments.
    """

    def __init__(self, grid: FieldGrid, level: float = 0.0):
        """
        Initialize the tracer.

        Args:
            grid: Field to contour
            level: Level value
        """
        self.grid = grid
        self.level = float(level)
        self.values = require_finite("grid values", grid.values)
        self.nx, self.ny = self.values.shape
        self.n_horizontal = (self.nx - 1) * self.ny

    def _edge_ids(self) -> Tuple[np.ndarray, ...]:
        """Edge ids e0..e3 of every cell, each of shape (nx-1, ny-1)."""
        nx, ny = self.nx, self.ny
        i, j = np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), indexing="ij")
        nh = self.n_horizontal
        return (
            i * ny + j,
            nh + (i + 1) * (ny - 1) + j,
            i * ny + j + 1,
            nh + i * (ny - 1) + j,
        )

    def _crossings(self, edge_ids: np.ndarray) -> np.ndarray:
        """Linear-interpolation crossing point of each edge id."""
        v = self.values
        xs, ys = self.grid.spec.x_centers, self.grid.spec.y_centers
        is_h = edge_ids < self.n_horizontal
        out = np.empty((edge_ids.size, 2))

        h = edge_ids[is_h]
        hi, hj = np.divmod(h, self.ny)
        va, vb = v[hi, hj], v[hi + 1, hj]
        t = (self.level - va) / (vb - va)
        out[is_h, 0] = xs[hi] + t * (xs[hi + 1] - xs[hi])
        out[is_h, 1] = ys[hj]

        w = edge_ids[~is_h] - self.n_horizontal
        vi, vj = np.divmod(w, self.ny - 1)
        va, vb = v[vi, vj], v[vi, vj + 1]
        t = (self.level - va) / (vb - va)
        out[~is_h, 0] = xs[vi]
        out[~is_h, 1] = ys[vj] + t * (ys[vj + 1] - ys[vj])
        return out

    def segments(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Return the cell segments as pairs of edge ids.

        Returns:
            Arrays (start, end) of edge ids
        """
        v = self.values
        above = v > self.level
        a0, a1 = above[:-1, :-1], above[1:, :-1]
        a2, a3 = above[1:, 1:], above[:-1, 1:]
        e0, e1, e2, e3 = self._edge_ids()
        x0, x1, x2, x3 = a0 != a1, a1 != a2, a2 != a3, a3 != a0
        n_cross = x0.astype(np.int8) + x1 + x2 + x3

        starts: List[np.ndarray] = []
        ends: List[np.ndarray] = []

        # Two crossings: one segment between the crossed edges
        two = n_cross == 2
        pairs = [
            (x0 & x1, e0, e1), (x0 & x2, e0, e2), (x0 & x3, e0, e3),
            (x1 & x2, e1, e2), (x1 & x3, e1, e3), (x2 & x3, e2, e3),
        ]
        for mask, ea, eb in pairs:
            m = two & mask
            starts.append(ea[m])
            ends.append(eb[m])

        # Saddles: the center average decides which diagonal pair is connected
        four = n_cross == 4
        if np.any(four):
            center = 0.25 * (v[:-1, :-1] + v[1:, :-1] + v[1:, 1:] + v[:-1, 1:])
            joined = four & ((center > self.level) == a0)
            split = four & ~joined
            starts += [e0[joined], e2[joined], e3[split], e1[split]]
            ends += [e1[joined], e3[joined], e0[split], e2[split]]

        return np.concatenate(starts), np.concatenate(ends)

    def trace(self) -> List[Contour]:
        """
        Stitch cell segments into contours.

        Returns:
            Open contours (flagged touches_boundary) followed by closed ones
        """
        seg_a, seg_b = self.segments()
        if seg_a.size == 0:
            return []
        nodes, inverse = np.unique(np.concatenate([seg_a, seg_b]), return_inverse=True)
        n_seg = seg_a.size
        u, w = inverse[:n_seg], inverse[n_seg:]

        src = np.concatenate([u, w])
        dst = np.concatenate([w, u])
        order = np.argsort(src, kind="stable")
        src, dst = src[order], dst[order]
        slot = np.zeros(src.size, dtype=np.int64)
        slot[1:] = (src[1:] == src[:-1]).astype(np.int64)
        neighbors = np.full((nodes.size, 2), -1, dtype=np.int64)
        neighbors[src, slot] = dst
        degree = (neighbors >= 0).sum(axis=1)

        points = self._crossings(nodes)
        nbr = neighbors.tolist()
        visited = np.zeros(nodes.size, dtype=bool)
        contours: List[Contour] = []

        def walk(start: int) -> List[int]:
            path = [start]
            visited[start] = True
            prev, cur = -1, start
            while True:
                n0, n1 = nbr[cur]
                nxt = n0 if n0 != prev else n1
                if nxt < 0 or nxt == start or visited[nxt]:
                    return path
                path.append(nxt)
                visited[nxt] = True
                prev, cur = cur, nxt

        for start in np.flatnonzero(degree == 1).tolist():
            if visited[start]:
                continue
            verts = _drop_repeats(points[walk(start)], closed=False)
            if len(verts) >= 2:
                contours.append(
                    Contour(vertices=verts, closed=False, level=self.level, touches_boundary=True)
                )
        for start in np.flatnonzero(~visited).tolist():
            if visited[start]:
                continue
            verts = _drop_repeats(points[walk(start)], closed=True)
            if len(verts) >= 3:
                contours.append(Contour(vertices=verts, closed=True, level=self.level))

        for n, c in enumerate(contours):
            c.contour_id = n
        return contours


def extract_isolines(grid: FieldGrid, level: float = 0.0) -> List[Contour]:
    """
    Extract all level-set polylines of a grid.

    Args:
        grid: Rendered field
        level: Level value

    Returns:
        Contours; open ones end on the grid boundary
    """
    if grid.nx < 2 or grid.ny < 2:
        raise InvalidInputError("Contouring needs at least 2x2 pixels")
    contours = MarchingSquares(grid, level).trace()
    n_closed = sum(1 for c in contours if c.closed)
    logger.info(
        f"Extracted {len(contours)} isolines at level {level:g}: "
        f"{n_closed} closed, {len(contours) - n_closed} touching the boundary"
    )
    return contours
