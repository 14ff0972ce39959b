"""
Blob database: Poisson pumping, shared-flow evolution and culling of Gaussian blobs.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from config import PumpingConfig
from flow import FlowRealization, HorizonMap, expm_traceless
from utils.logging import get_logger
from utils.validation import InvalidInputError, require_finite

logger = get_logger(__name__)

Rect = Tuple[float, float, float, float]

# Relative slack when comparing blob times against step boundaries
_T_TOL = 1e-12


@dataclass
class Pumping:
    """
    Pumping in absolute units: ``nu`` events per unit time per unit L^2.
    """
    nu: float
    amp_sigma: float = 1.0
    spawn_margin: float = 3.0
    spawn_frame: str = "window"
    horizon: Optional[float] = None

    def __post_init__(self) -> None:
        if self.nu < 0 or self.amp_sigma <= 0 or self.spawn_margin < 3:
            raise InvalidInputError(
                "Pumping needs nu >= 0, amp_sigma > 0 and spawn_margin >= 3",
                details={"nu": self.nu, "amp_sigma": self.amp_sigma, "margin": self.spawn_margin},
            )
        if self.spawn_frame not in ("window", "preimage"):
            raise InvalidInputError(f"Unknown spawn frame {self.spawn_frame!r}")

    @classmethod
    def from_config(
        cls,
        cfg: PumpingConfig,
        lambda_: float,
        t_lambda: float,
        horizon: Optional[float] = None
    ) -> "Pumping":
        """
        Convert the dimensionless config (nu/lambda) to absolute units.

        Args:
            cfg: Pumping section of the experiment config
            lambda_: Measured Lyapunov exponent
            t_lambda: Run length in units of 1/lambda (sets the default margin)
            horizon: Preimage horizon time (absolute)
        """
        return cls(
            nu=cfg.nu_over_lambda * lambda_,
            amp_sigma=cfg.amp_sigma,
            spawn_margin=cfg.margin_for(t_lambda),
            spawn_frame=cfg.spawn_frame,
            horizon=horizon,
        )


class BlobDatabase:
    """
    Struct-of-arrays store of all blobs sharing one flow realization.

    Per blob: creation time ``t0``, creation center ``r_c``, amplitude ``theta0``,
    evolution operator ``W``, moment of inertia ``I`` with its determinant ``det_I``,
    and the time ``t_state`` its operators refer to.
    """

    def __init__(
        self,
        window: Rect,
        t_now: float = 0.0,
        cull_threshold: float = 1e-4,
        support_sigmas: float = 6.0,
        margin: float = 3.0
    ):
        """
        Initialize an empty database.

        Args:
            window: Render window (xmin, ymin, xmax, ymax)
            t_now: Current time
            cull_threshold: Minimum retained peak amplitude
            support_sigmas: Truncation radius of a blob in units of its sigma
            margin: Border around the window used for spawning and culling
        """
        xmin, ymin, xmax, ymax = (float(v) for v in window)
        if not (xmax > xmin and ymax > ymin):
            raise InvalidInputError(f"Degenerate window {window}")
        self.window: Rect = (xmin, ymin, xmax, ymax)
        self.t_now = float(t_now)
        self.cull_threshold = float(cull_threshold)
        self.support_sigmas = float(support_sigmas)
        self.margin = float(margin)
        self.horizon: Optional[float] = None
        self.t0 = np.empty(0)
        self.r_c = np.empty((0, 2))
        self.theta0 = np.empty(0)
        self.W = np.empty((0, 2, 2))
        self.I = np.empty((0, 2, 2))
        self.det_I = np.empty(0)
        self.t_state = np.empty(0)

    def __len__(self) -> int:
        return int(self.t0.shape[0])

    @property
    def expanded_window(self) -> Rect:
        """Window grown by the spawn margin."""
        xmin, ymin, xmax, ymax = self.window
        m = self.margin
        return (xmin - m, ymin - m, xmax + m, ymax + m)

    @property
    def born(self) -> np.ndarray:
        """Mask of blobs created at or before ``t_now``."""
        return self.t0 <= self.t_now + _T_TOL * max(1.0, abs(self.t_now))

    @property
    def centers(self) -> np.ndarray:
        """Advected centers W(t, t0) r_c, shape (n, 2)."""
        return np.einsum("nij,nj->ni", self.W, self.r_c)

    @property
    def peak_amplitudes(self) -> np.ndarray:
        """|theta0| / sqrt(det I)."""
        return np.abs(self.theta0) / np.sqrt(self.det_I)

    def half_extents(self, sigmas: Optional[float] = None) -> np.ndarray:
        """Half widths of the axis-aligned box around each support ellipse, shape (n, 2)."""
        k = self.support_sigmas if sigmas is None else float(sigmas)
        return k * np.sqrt(np.stack([self.I[:, 0, 0], self.I[:, 1, 1]], axis=1))

    def add(self, t0: np.ndarray, r_c: np.ndarray, theta0: np.ndarray) -> None:
        """Append fresh blobs (W = I = identity at their creation time)."""
        n = len(t0)
        if n == 0:
            return
        eye = np.broadcast_to(np.eye(2), (n, 2, 2))
        self.t0 = np.concatenate([self.t0, np.asarray(t0, dtype=float)])
        self.r_c = np.concatenate([self.r_c, np.asarray(r_c, dtype=float).reshape(n, 2)])
        self.theta0 = np.concatenate([self.theta0, np.asarray(theta0, dtype=float)])
        self.W = np.concatenate([self.W, eye])
        self.I = np.concatenate([self.I, eye])
        self.det_I = np.concatenate([self.det_I, np.ones(n)])
        self.t_state = np.concatenate([self.t_state, np.asarray(t0, dtype=float)])

    def keep(self, mask: np.ndarray) -> int:
        """Retain only blobs where ``mask`` is true; return the number removed."""
        mask = np.asarray(mask, dtype=bool)
        removed = int(len(self) - np.count_nonzero(mask))
        for name in ("t0", "r_c", "theta0", "W", "I", "det_I", "t_state"):
            setattr(self, name, getattr(self, name)[mask])
        return removed

    def copy(self) -> "BlobDatabase":
        """Deep copy of the database."""
        other = BlobDatabase(
            self.window, self.t_now, self.cull_threshold, self.support_sigmas, self.margin
        )
        other.horizon = self.horizon
        for name in ("t0", "r_c", "theta0", "W", "I", "det_I", "t_state"):
            setattr(other, name, getattr(self, name).copy())
        return other


def spawn_blobs(
    db: BlobDatabase,
    pumping: Pumping,
    t_from: float,
    t_to: float,
    rng_stream: int,
    flow: Optional[FlowRealization] = None
) -> BlobDatabase:
    """
    Add a Poisson batch of blobs created during ``[t_from, t_to)``.

    The count is Poisson(nu * area(window + margin) * (t_to - t_from)); creation times
    are uniform, amplitudes Normal(0, amp_sigma^2). Centers are uniform over the
    expanded window, or, in the ``preimage`` frame, over its preimage under
    W(horizon, t0) so that they land uniformly in the window at the horizon.

    Args:
        db: Database to extend (modified in place)
        pumping: Pumping rate, amplitude law and spawn frame
        t_from: Start of the creation interval
        t_to: End of the creation interval
        rng_stream: Seed of this batch
        flow: Flow realization, required for the ``preimage`` frame

    Returns:
        The same database
    """
    if t_to < t_from:
        raise InvalidInputError(f"Negative spawn duration [{t_from}, {t_to})")
    db.margin = pumping.spawn_margin
    xmin, ymin, xmax, ymax = db.expanded_window
    area = (xmax - xmin) * (ymax - ymin)
    rng = np.random.default_rng(np.random.SeedSequence(rng_stream))
    n = int(rng.poisson(pumping.nu * area * (t_to - t_from))) if pumping.nu > 0 else 0
    if n == 0:
        return db

    t0 = np.sort(rng.uniform(t_from, t_to, size=n))
    pos = np.column_stack([rng.uniform(xmin, xmax, size=n), rng.uniform(ymin, ymax, size=n)])
    theta0 = rng.normal(0.0, pumping.amp_sigma, size=n)

    if pumping.spawn_frame == "preimage":
        if flow is None or pumping.horizon is None:
            raise InvalidInputError("Preimage spawning needs a flow realization and a horizon")
        if t_to > pumping.horizon + _T_TOL:
            raise InvalidInputError("Preimage spawning past the horizon")
        db.horizon = pumping.horizon
        to_horizon = HorizonMap(flow, pumping.horizon).at(t0)
        # inverse of a unimodular 2x2 matrix is its adjugate
        inv = np.empty_like(to_horizon)
        inv[:, 0, 0] = to_horizon[:, 1, 1]
        inv[:, 1, 1] = to_horizon[:, 0, 0]
        inv[:, 0, 1] = -to_horizon[:, 0, 1]
        inv[:, 1, 0] = -to_horizon[:, 1, 0]
        pos = np.einsum("nij,nj->ni", inv, pos)

    db.add(t0, pos, theta0)
    logger.debug(f"Spawned {n} blobs in [{t_from:.4g}, {t_to:.4g})")
    return db


def evolve_to(db: BlobDatabase, flow: FlowRealization, t_target: float) -> BlobDatabase:
    """
    Advance every blob through the shared sample stream to ``t_target``.

    Blobs created inside a step get a partial first step from their creation time;
    blobs created after ``t_target`` are left untouched.

    Args:
        db: Database (modified in place)
        flow: Flow realization shared by all blobs
        t_target: Target time, >= db.t_now

    Returns:
        The same database
    """
    if t_target < db.t_now:
        raise InvalidInputError(f"Cannot evolve backwards from {db.t_now} to {t_target}")
    kappa = flow.params.kappa_d
    pending = db.t_state < t_target
    if np.any(pending):
        t_a = float(np.min(db.t_state[pending]))
        for k, tau in flow.segments(t_a, t_target):
            t_b = t_a + tau
            tol = _T_TOL * max(1.0, abs(t_b))
            full = db.t_state <= t_a + tol
            partial = (~full) & (db.t_state < t_b - tol)
            sigma = flow.sample(k).sigma
            if np.any(full):
                _advance(db, full, expm_traceless(sigma, tau), tau, kappa)
            if np.any(partial):
                taus = t_b - db.t_state[partial]
                _advance(db, partial, expm_traceless(sigma, taus), taus, kappa)
            db.t_state[full | partial] = t_b
            t_a = t_b
    snapped = np.abs(db.t_state - t_target) <= _T_TOL * max(1.0, abs(t_target))
    db.t_state[snapped] = t_target
    db.t_now = float(t_target)
    require_finite("blob operators", db.W)
    return db


def _advance(
    db: BlobDatabase,
    mask: np.ndarray,
    E: np.ndarray,
    taus: np.ndarray,
    kappa_d: float
) -> None:
    W = db.W[mask]
    I = db.I[mask]
    Et = np.swapaxes(E, -1, -2)
    db.W[mask] = E @ W
    advected = E @ I @ Et
    advected = 0.5 * (advected + np.swapaxes(advected, -1, -2))
    c = 2.0 * kappa_d * taus
    # det(A + c Id) = det A + c tr A + c^2 for 2x2 A, and det(E I E^T) = det I
    trace = advected[..., 0, 0] + advected[..., 1, 1]
    db.det_I[mask] = db.det_I[mask] + c * trace + c * c
    advected[..., 0, 0] += c
    advected[..., 1, 1] += c
    db.I[mask] = advected


def support_intersects(db: BlobDatabase, rect: Rect, sigmas: Optional[float] = None) -> np.ndarray:
    """Mask of blobs whose support box overlaps ``rect``."""
    xmin, ymin, xmax, ymax = rect
    c = db.centers
    h = db.half_extents(sigmas)
    return (
        (c[:, 0] + h[:, 0] >= xmin) & (c[:, 0] - h[:, 0] <= xmax)
        & (c[:, 1] + h[:, 1] >= ymin) & (c[:, 1] - h[:, 1] <= ymax)
    )


def cull(db: BlobDatabase) -> int:
    """
    Remove dissipated blobs and blobs that left the expanded window.

    A blob is removed when its peak amplitude falls below ``db.cull_threshold`` or
    its support no longer meets the expanded window. The geometric test uses the
    axis-aligned bounding box of the support ellipse, so a strongly sheared blob
    whose ellipse already misses the window can survive until its box does too.
    In the preimage frame the geometric test only applies once ``t_now`` has
    reached the horizon, since blobs outside the window are still on their way in.

    Args:
        db: Database (modified in place)

    Returns:
        Number of blobs removed
    """
    if len(db) == 0:
        return 0
    keep = db.peak_amplitudes >= db.cull_threshold
    if db.horizon is None or db.t_now >= db.horizon - _T_TOL * max(1.0, abs(db.horizon)):
        keep &= support_intersects(db, db.expanded_window) | ~db.born
    removed = db.keep(keep)
    if removed:
        logger.debug(f"Culled {removed} blobs, {len(db)} retained at t={db.t_now:.4g}")
    return removed
