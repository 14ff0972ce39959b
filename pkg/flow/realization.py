"""
Seeded stream of white-in-time velocity-gradient samples.
"""

import threading
from dataclasses import dataclass
from typing import Dict, Iterator, Tuple

import numpy as np

from config import FlowParams
from utils.logging import get_logger
from utils.validation import InvalidInputError

logger = get_logger(__name__)

# Steps drawn per RNG stream; part of the reproducibility contract.
CHUNK_STEPS = 1024

_SQRT2 = np.sqrt(2.0)


@dataclass(frozen=True)
class GradientSample:
    """
    One traceless gradient matrix, valid over ``[t_k, t_k + dt)``.
    """
    sigma: np.ndarray
    step_index: int


def traceless_gaussian(normals: np.ndarray, D: float, dt: float) -> np.ndarray:
    """
    Map standard normals of shape (..., 3) to traceless gradient matrices.

    The second moments are ``D/dt * [3 d_ik d_jl - d_ij d_kl - d_il d_jk]``:
    var(s11) = D/dt, var(s12) = var(s21) = 3D/dt, cov(s12, s21) = -D/dt.

    Args:
        normals: Array of standard normal draws, last axis of length 3
        D: Gradient-covariance amplitude
        dt: Step length

    Returns:
        Array of shape (..., 2, 2)
    """
    scale = np.sqrt(D / dt)
    g0, g1, g2 = normals[..., 0], normals[..., 1], normals[..., 2]
    a = scale * g2
    b = scale * (g0 + _SQRT2 * g1)
    c = scale * (g0 - _SQRT2 * g1)
    sigma = np.empty(normals.shape[:-1] + (2, 2))
    sigma[..., 0, 0] = a
    sigma[..., 0, 1] = b
    sigma[..., 1, 0] = c
    sigma[..., 1, 1] = -a
    return sigma


class FlowRealization:
    """
    Lazily generated, append-only sequence of gradient samples.

    Sample k is a pure function of (seed, k): chunk ``k // CHUNK_STEPS`` is drawn from
    its own ``SeedSequence`` child, so workers may trigger generation in any order.
    """

    def __init__(self, params: FlowParams, t_start: float = 0.0):
        """
        Initialize the realization.

        Args:
            params: Flow parameters (D, kappa_d, dt, seed)
            t_start: Time of step 0
        """
        self.params = params
        self.t_start = float(t_start)
        self._chunks: Dict[int, np.ndarray] = {}
        self._lock = threading.Lock()

    def _draw_chunk(self, chunk: int) -> np.ndarray:
        seq = np.random.SeedSequence(entropy=self.params.seed, spawn_key=(chunk,))
        rng = np.random.default_rng(seq)
        normals = rng.standard_normal((CHUNK_STEPS, 3))
        sigma = traceless_gaussian(normals, self.params.D, self.params.dt)
        sigma.setflags(write=False)
        return sigma

    def _chunk(self, chunk: int, cache: bool = True) -> np.ndarray:
        data = self._chunks.get(chunk)
        if data is not None:
            return data
        data = self._draw_chunk(chunk)
        if cache:
            with self._lock:
                # First writer wins; both copies are identical anyway
                data = self._chunks.setdefault(chunk, data)
        return data

    def sample(self, step_index: int) -> GradientSample:
        """Return the gradient sample of step ``step_index``."""
        if step_index < 0:
            raise InvalidInputError(f"step_index must be >= 0, got {step_index}")
        chunk, offset = divmod(int(step_index), CHUNK_STEPS)
        return GradientSample(sigma=self._chunk(chunk)[offset], step_index=int(step_index))

    def gradient_block(self, k0: int, k1: int, cache: bool = True) -> np.ndarray:
        """
        Return samples ``k0 .. k1-1`` stacked as an array of shape (k1-k0, 2, 2).

        Args:
            k0: First step index
            k1: One past the last step index
            cache: Keep generated chunks in memory
        """
        if k0 < 0 or k1 < k0:
            raise InvalidInputError(f"Invalid step range [{k0}, {k1})")
        parts = []
        k = k0
        while k < k1:
            chunk, offset = divmod(k, CHUNK_STEPS)
            stop = min(CHUNK_STEPS, offset + (k1 - k))
            parts.append(self._chunk(chunk, cache=cache)[offset:stop])
            k += stop - offset
        if not parts:
            return np.empty((0, 2, 2))
        return np.concatenate(parts, axis=0)

    def step_time(self, k: int) -> float:
        """Start time of step k."""
        return self.t_start + k * self.params.dt

    def step_index(self, t: float) -> int:
        """Index of the step containing time t."""
        if t < self.t_start - 1e-12 * max(1.0, abs(self.t_start)):
            raise InvalidInputError(f"Time {t} precedes the realization origin {self.t_start}")
        x = (t - self.t_start) / self.params.dt
        # Snap times that sit on a step boundary up to rounding
        k = int(np.floor(x + 1e-9))
        return max(k, 0)

    def segments(self, t_from: float, t_to: float) -> Iterator[Tuple[int, float]]:
        """
        Split ``[t_from, t_to)`` along the step grid.

        Yields:
            (step index, duration) pairs; the first and last may be partial steps
        """
        t = float(t_from)
        while t < t_to:
            k = self.step_index(t)
            t_next = min(self.step_time(k + 1), t_to)
            if t_next <= t:
                # Boundary snapped past t; move to the following step
                t_next = min(self.step_time(k + 2), t_to)
            yield k, t_next - t
            t = t_next

    @property
    def cached_chunks(self) -> int:
        """Number of generated chunks kept in memory."""
        return len(self._chunks)


def sample_gradient(realization: FlowRealization, step_index: int) -> GradientSample:
    """
    Return the unique traceless Gaussian gradient of a step.

    Args:
        realization: The flow realization
        step_index: Step number, >= 0

    Returns:
        The gradient sample, identical on every call for fixed (seed, step_index)
    """
    return realization.sample(step_index)
