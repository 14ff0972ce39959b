"""
Discrete chordal Loewner evolution with vertical-slit maps.

The elementary map of a step with slit base ``xi`` and height ``h`` is
g(z) = xi + sqrt((z - xi)^2 + h^2), which sends the slit [xi, xi + i h] onto the
real axis and advances half-plane capacity time by h^2 / 4.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from utils.logging import get_logger
from utils.validation import InvalidInputError, LoewnerBreakdownError, require_finite, require_positive

logger = get_logger(__name__)

# Imaginary parts above -_AXIS_TOL * scale count as on or above the real axis
_AXIS_TOL = 1e-12


@dataclass
class ChordalCurve:
    """
    Curve in the closed upper half plane rooted on the real axis.

    ``points`` is a complex array; points[0] is real.
    """
    points: np.ndarray

    def __post_init__(self) -> None:
        z = np.asarray(self.points, dtype=complex).ravel()
        require_finite("chordal curve", z)
        if z.size < 2:
            raise InvalidInputError("A chordal curve needs at least 2 points")
        scale = max(1.0, float(np.max(np.abs(z))))
        if z[0].imag != 0.0:
            raise InvalidInputError(f"Chordal curve must start on the real axis, got {z[0]}")
        if np.any(z.imag < -_AXIS_TOL * scale):
            raise InvalidInputError("Chordal curve leaves the upper half plane")
        if np.any(z[1:] == z[:-1]):
            raise InvalidInputError("Chordal curve has repeated consecutive points")
        self.points = z

    def __len__(self) -> int:
        return int(self.points.size)

    @property
    def diameter(self) -> float:
        """Largest extent of the bounding box."""
        return float(max(np.ptp(self.points.real), np.ptp(self.points.imag)))

    @classmethod
    def from_xy(cls, xy: np.ndarray) -> "ChordalCurve":
        """Build from an (n, 2) array of coordinates."""
        xy = np.asarray(xy, dtype=float)
        return cls(points=xy[:, 0] + 1j * xy[:, 1])


@dataclass
class DrivingFunction:
    """
    Samples (t_k, xi_k) of a driving function; t_0 = 0 and t strictly increasing.
    """
    t: np.ndarray
    xi: np.ndarray
    contour_id: int = -1

    def __post_init__(self) -> None:
        self.t = require_finite("driving times", np.asarray(self.t, dtype=float).ravel())
        self.xi = require_finite("driving values", np.asarray(self.xi, dtype=float).ravel())
        if self.t.size != self.xi.size or self.t.size < 1:
            raise InvalidInputError("Driving function needs matching, non-empty t and xi")
        if self.t[0] != 0.0:
            raise InvalidInputError(f"Driving function must start at t = 0, got {self.t[0]}")
        if np.any(np.diff(self.t) <= 0):
            raise InvalidInputError("Driving times must be strictly increasing")

    def __len__(self) -> int:
        return int(self.t.size)

    @property
    def total_time(self) -> float:
        """Total half-plane capacity time."""
        return float(self.t[-1])

    @property
    def heights(self) -> np.ndarray:
        """Slit heights 2 sqrt(dt) of steps 1..n-1."""
        return 2.0 * np.sqrt(np.diff(self.t))


def _slit_map(z: np.ndarray, xi: float, h: float) -> np.ndarray:
    """Forward map g(z) = xi + sqrt((z - xi)^2 + h^2), branch in the upper half plane."""
    u = z - xi
    out = xi + 1j * np.sqrt(-(u * u + h * h))
    on_axis = u.imag <= 0.0
    if np.any(on_axis):
        ur = u.real[on_axis]
        out[on_axis] = xi + np.sign(ur) * np.sqrt(ur * ur + h * h)
    return out


def _inverse_slit_map(w: np.ndarray, xi: float, h: float) -> np.ndarray:
    """Inverse map xi + sqrt((w - xi)^2 - h^2), sending the real axis onto axis plus slit."""
    u = w - xi
    out = xi + 1j * np.sqrt(h * h - u * u)
    on_axis = u.imag <= 0.0
    if np.any(on_axis):
        ur = u.real[on_axis]
        inside = np.abs(ur) <= h
        vals = np.where(
            inside,
            1j * np.sqrt(np.maximum(h * h - ur * ur, 0.0)),
            np.sign(ur) * np.sqrt(np.maximum(ur * ur - h * h, 0.0)),
        )
        out[on_axis] = xi + vals
    return out


def _lift(z: np.ndarray) -> np.ndarray:
    """Clamp rounding-level negative imaginary parts to the real axis."""
    neg = z.imag < 0.0
    if np.any(neg):
        z = z.copy()
        z[neg] = z[neg].real
    return z


def unzip(curve: ChordalCurve) -> DrivingFunction:
    """
    Map the curve onto the real axis one vertex at a time.

    Step k reads xi_k and h_k from the current image of vertex k, removes the
    vertical slit [xi_k, xi_k + i h_k] from all later vertices and advances
    capacity time by h_k^2 / 4. Each step touches every remaining vertex, so the
    cost is quadratic in the number of vertices.

    Args:
        curve: Chordal curve

    Returns:
        The driving function, starting at (0, Re points[0])

    Raises:
        LoewnerBreakdownError: If a vertex image reaches the real axis
    """
    z = curve.points.copy()
    n = z.size
    t = np.empty(n)
    xi = np.empty(n)
    t[0] = 0.0
    xi[0] = z[0].real
    for k in range(1, n):
        w = z[k]
        h = w.imag
        if not np.isfinite(w) or h <= 0.0:
            raise LoewnerBreakdownError(
                f"Zipper lost capacity at step {k}: vertex image {w}",
                details={"step": k, "image": complex(w)},
            )
        xi[k] = w.real
        t[k] = t[k - 1] + 0.25 * h * h
        if k + 1 < n:
            z[k + 1:] = _lift(_slit_map(z[k + 1:], xi[k], h))
    if np.any(np.diff(t) <= 0):
        step = int(np.argmax(np.diff(t) <= 0)) + 1
        raise LoewnerBreakdownError(
            f"Capacity time stalled at step {step}", details={"step": step}
        )
    return DrivingFunction(t=t, xi=xi)


def zip_curve(driving: DrivingFunction) -> ChordalCurve:
    """
    Rebuild the trace of a driving function by composing inverse slit maps.

    Vertex k is the image of xi_k under g_1^-1 o ... o g_k^-1; the maps are
    applied from the last step down to the first.

    Args:
        driving: Driving function

    Returns:
        The chordal curve

    Raises:
        NonFiniteStateError: If the steps are too coarse for the composition
    """
    xi = driving.xi
    h = np.concatenate([[0.0], driving.heights])
    z = xi.astype(complex)
    for j in range(len(driving) - 1, 0, -1):
        z[j:] = _inverse_slit_map(z[j:], xi[j], h[j])
    require_finite("zipped trace", z)
    return ChordalCurve(points=z)


def apply_slit_maps(
    driving: DrivingFunction,
    points: np.ndarray,
    n_steps: Optional[int] = None
) -> np.ndarray:
    """
    Push points through the forward slit maps of a driving function.

    Args:
        driving: Driving function
        points: Complex points in the closed upper half plane
        n_steps: Number of leading steps to apply; defaults to all

    Returns:
        Images of the points
    """
    z = _lift(np.asarray(points, dtype=complex).ravel().copy())
    heights = driving.heights
    last = len(driving) - 1 if n_steps is None else int(n_steps)
    if not 0 <= last <= len(driving) - 1:
        raise InvalidInputError(f"n_steps must be in [0, {len(driving) - 1}], got {n_steps}")
    for k in range(1, last + 1):
        z = _lift(_slit_map(z, driving.xi[k], heights[k - 1]))
    return z


def rescale_curve(curve: ChordalCurve, factor_x: float, factor_y: float) -> ChordalCurve:
    """
    Anisotropic scaling (x * factor_x, y * factor_y) about the origin.

    Args:
        curve: Chordal curve
        factor_x: Horizontal factor (> 0)
        factor_y: Vertical factor (> 0)

    Returns:
        The scaled curve
    """
    factor_x = require_positive("factor_x", factor_x)
    factor_y = require_positive("factor_y", factor_y)
    z = curve.points
    return ChordalCurve(points=z.real * factor_x + 1j * (z.imag * factor_y))
