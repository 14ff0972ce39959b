"""
Rendering of the blob database onto a pixel grid.
"""

import math
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

from config import GridConfig, WindowConfig
from utils.logging import get_logger
from utils.validation import InvalidInputError, require_finite, require_positive

from .blobs import BlobDatabase

logger = get_logger(__name__)

# Candidates evaluated together inside one tile
_CANDIDATE_CHUNK = 64


@dataclass(frozen=True)
class GridSpec:
    """
    Shape of a pixel grid: pixel (i, j) has its center at origin + ((i+0.5)p, (j+0.5)p).
    """
    origin: Tuple[float, float]
    pixel_size: float
    nx: int
    ny: int

    def __post_init__(self) -> None:
        require_positive("pixel_size", self.pixel_size)
        if self.nx < 1 or self.ny < 1:
            raise InvalidInputError(f"Grid needs at least one pixel, got {self.nx}x{self.ny}")

    @classmethod
    def from_config(cls, window: WindowConfig, grid: GridConfig) -> "GridSpec":
        """Grid covering the whole window with square pixels of width window.width/nx."""
        return cls(
            origin=(window.x0, window.y0),
            pixel_size=window.width / grid.nx,
            nx=grid.nx,
            ny=grid.ny,
        )

    @property
    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.nx) + 0.5) * self.pixel_size

    @property
    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.ny) + 0.5) * self.pixel_size

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) of the pixel area."""
        x0, y0 = self.origin
        return (x0, y0, x0 + self.nx * self.pixel_size, y0 + self.ny * self.pixel_size)


@dataclass
class FieldGrid:
    """
    Rendered scalar field; ``values`` has shape (nx, ny).
    """
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = require_finite("grid values", self.values)
        if self.values.shape != (self.spec.nx, self.spec.ny):
            raise InvalidInputError(
                f"values shape {self.values.shape} does not match grid {self.spec.nx}x{self.spec.ny}"
            )

    @property
    def origin(self) -> Tuple[float, float]:
        return self.spec.origin

    @property
    def pixel_size(self) -> float:
        return self.spec.pixel_size

    @property
    def nx(self) -> int:
        return self.spec.nx

    @property
    def ny(self) -> int:
        return self.spec.ny


def _inverse_quadratic(
    I: np.ndarray, det_I: np.ndarray, dx: np.ndarray, dy: np.ndarray
) -> np.ndarray:
    """d^T I^-1 d using the adjugate and the tracked determinant."""
    return (I[..., 1, 1] * dx * dx - 2.0 * I[..., 0, 1] * dx * dy + I[..., 0, 0] * dy * dy) / det_I


def eval_point(db: BlobDatabase, x: np.ndarray, sigmas: Optional[float] = None) -> float:
    """
    Evaluate the scalar field at one point.

    theta(x) = sum theta0/sqrt(det I) * exp(-1/2 (x-c)^T I^-1 (x-c)) over born blobs,
    skipping blobs whose support ellipse excludes x.

    Args:
        db: Blob database
        x: Point (2-vector)
        sigmas: Truncation radius; defaults to ``db.support_sigmas``

    Returns:
        The field value
    """
    if len(db) == 0:
        return 0.0
    k = db.support_sigmas if sigmas is None else float(sigmas)
    born = db.born
    c = db.centers[born]
    dx = float(x[0]) - c[:, 0]
    dy = float(x[1]) - c[:, 1]
    q = _inverse_quadratic(db.I[born], db.det_I[born], dx, dy)
    inside = q <= k * k
    terms = db.theta0[born][inside] / np.sqrt(db.det_I[born][inside]) * np.exp(-0.5 * q[inside])
    return math.fsum(terms.tolist())


def _principal_axes(I: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Unit major axis and the variances along major and minor axes of each I."""
    a, b, d = I[:, 0, 0], I[:, 0, 1], I[:, 1, 1]
    half_tr = 0.5 * (a + d)
    disc = np.sqrt(np.maximum((0.5 * (a - d)) ** 2 + b * b, 0.0))
    major = half_tr + disc
    angle = 0.5 * np.arctan2(2.0 * b, a - d)
    axis = np.column_stack([np.cos(angle), np.sin(angle)])
    return axis, major, np.maximum(half_tr - disc, 0.0)


class TileIndex:
    """
    Spatial hash from render tiles to the blobs whose support may reach them.

    A blob is registered in every tile of its support bounding box that is not
    separated from its support ellipse along the ellipse principal axes.
    """

    def __init__(self, spec: GridSpec, tile: int):
        """
        Initialize an empty index.

        Args:
            spec: Grid being rendered
            tile: Tile edge in pixels
        """
        self.spec = spec
        self.tile = int(tile)
        self.n_tx = -(-spec.nx // self.tile)
        self.n_ty = -(-spec.ny // self.tile)
        self.table: Dict[Tuple[int, int], List[int]] = defaultdict(list)

    @property
    def tile_width(self) -> float:
        return self.tile * self.spec.pixel_size

    def tile_bounds(self, ti: int, tj: int) -> Tuple[slice, slice]:
        """Pixel slices covered by tile (ti, tj)."""
        return (
            slice(ti * self.tile, min((ti + 1) * self.tile, self.spec.nx)),
            slice(tj * self.tile, min((tj + 1) * self.tile, self.spec.ny)),
        )

    def build(self, db: BlobDatabase, blob_ids: np.ndarray, sigmas: float) -> "TileIndex":
        """
        Register blobs ``blob_ids`` of ``db``.

        Args:
            db: Blob database
            blob_ids: Indices of the blobs to register
            sigmas: Support radius in blob sigmas

        Returns:
            The index itself
        """
        if len(blob_ids) == 0:
            return self
        centers = db.centers[blob_ids]
        I = db.I[blob_ids]
        half = sigmas * np.sqrt(np.stack([I[:, 0, 0], I[:, 1, 1]], axis=1)) + self.spec.pixel_size
        axis, major, minor = _principal_axes(I)
        reach = sigmas * np.sqrt(np.stack([major, minor], axis=1))

        x0, y0 = self.spec.origin
        w = self.tile_width
        lo_t = np.floor((centers - half - (x0, y0)) / w).astype(np.int64)
        hi_t = np.floor((centers + half - (x0, y0)) / w).astype(np.int64)
        lo_t = np.maximum(lo_t, 0)
        hi_t[:, 0] = np.minimum(hi_t[:, 0], self.n_tx - 1)
        hi_t[:, 1] = np.minimum(hi_t[:, 1], self.n_ty - 1)

        for n, blob in enumerate(blob_ids):
            if hi_t[n, 0] < lo_t[n, 0] or hi_t[n, 1] < lo_t[n, 1]:
                continue
            ti, tj = np.meshgrid(
                np.arange(lo_t[n, 0], hi_t[n, 0] + 1),
                np.arange(lo_t[n, 1], hi_t[n, 1] + 1),
                indexing="ij",
            )
            ti, tj = ti.ravel(), tj.ravel()
            rel_x = x0 + (ti + 0.5) * w - centers[n, 0]
            rel_y = y0 + (tj + 0.5) * w - centers[n, 1]
            ux, uy = axis[n]
            tile_half = 0.5 * w
            along_major = np.abs(rel_x * ux + rel_y * uy)
            along_minor = np.abs(-rel_x * uy + rel_y * ux)
            slack = tile_half * (abs(ux) + abs(uy)) + self.spec.pixel_size
            hit = (along_major <= reach[n, 0] + slack) & (along_minor <= reach[n, 1] + slack)
            for a, b in zip(ti[hit].tolist(), tj[hit].tolist()):
                self.table[(a, b)].append(int(blob))
        return self

    @property
    def n_registrations(self) -> int:
        return sum(len(v) for v in self.table.values())


def _render_tile(
    db_arrays: Tuple[np.ndarray, ...],
    xs: np.ndarray,
    ys: np.ndarray,
    candidates: List[int],
    sigmas: float
) -> np.ndarray:
    centers, I, det_I, theta0 = db_arrays
    total = np.zeros((xs.size, ys.size))
    comp = np.zeros_like(total)
    if not candidates:
        return total
    idx = np.asarray(candidates, dtype=np.int64)
    X = xs[None, :, None]
    Y = ys[None, None, :]
    cutoff = sigmas * sigmas
    for start in range(0, idx.size, _CANDIDATE_CHUNK):
        part = idx[start:start + _CANDIDATE_CHUNK]
        dx = X - centers[part, 0][:, None, None]
        dy = Y - centers[part, 1][:, None, None]
        q = _inverse_quadratic(
            I[part][:, None, None], det_I[part][:, None, None], dx, dy
        )
        amp = (theta0[part] / np.sqrt(det_I[part]))[:, None, None]
        terms = np.where(q <= cutoff, amp * np.exp(-0.5 * np.minimum(q, cutoff)), 0.0)
        for term in terms:
            # Neumaier compensated summation
            s = total + term
            comp += np.where(np.abs(total) >= np.abs(term), (total - s) + term, (term - s) + total)
            total = s
    return total + comp


def render(
    db: BlobDatabase,
    spec: GridSpec,
    tile: int = 128,
    workers: int = 1,
    sigmas: Optional[float] = None
) -> FieldGrid:
    """
    Render the field at every pixel center of ``spec``.

    Blobs are bucketed into tiles through :class:`TileIndex`, so the cost follows
    the pixels covered by blob supports. Pixel sums use compensated accumulation in
    blob order, which makes the result independent of ``workers``.

    Args:
        db: Blob database
        spec: Grid to fill; must lie inside ``db.window``
        tile: Tile edge in pixels
        workers: Number of render threads
        sigmas: Support radius; defaults to ``db.support_sigmas``

    Returns:
        The rendered grid
    """
    xmin, ymin, xmax, ymax = spec.extent
    wx0, wy0, wx1, wy1 = db.window
    tol = 1e-9 * max(1.0, abs(wx1 - wx0), abs(wy1 - wy0))
    if xmin < wx0 - tol or ymin < wy0 - tol or xmax > wx1 + tol or ymax > wy1 + tol:
        raise InvalidInputError(
            f"Grid extent {spec.extent} exceeds the database window {db.window}",
            details={"grid": spec.extent, "window": db.window},
        )
    k = db.support_sigmas if sigmas is None else float(sigmas)
    values = np.zeros((spec.nx, spec.ny))
    if len(db) == 0:
        return FieldGrid(spec=spec, values=values)

    blob_ids = np.flatnonzero(db.born)
    index = TileIndex(spec, tile).build(db, blob_ids, k)
    arrays = (db.centers, db.I, db.det_I, db.theta0)
    xs_all, ys_all = spec.x_centers, spec.y_centers
    tiles = sorted(index.table.keys())
    logger.debug(
        f"Rendering {len(blob_ids)} blobs on {spec.nx}x{spec.ny} pixels: "
        f"{len(tiles)} occupied tiles, {index.n_registrations} registrations"
    )

    def work(key: Tuple[int, int]) -> None:
        sx, sy = index.tile_bounds(*key)
        values[sx, sy] = _render_tile(arrays, xs_all[sx], ys_all[sy], index.table[key], k)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            list(executor.map(work, tiles))
    else:
        for key in tiles:
            work(key)

    return FieldGrid(spec=spec, values=values)
