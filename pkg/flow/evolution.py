"""
Per-blob evolution operators W(t, t0) and moment of inertia I(t, t0).
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from config import FlowParams
from utils.logging import get_logger
from utils.validation import InvalidInputError, require_finite

from .realization import FlowRealization, GradientSample

logger = get_logger(__name__)

_IDENTITY = np.eye(2)


def expm_traceless(sigma: np.ndarray, tau: float) -> np.ndarray:
    """
    Closed-form exponential of ``tau * sigma`` for traceless 2x2 matrices.

    With M = tau*sigma, M^2 = q*Id where q = -det(M), so
    exp(M) = c(q)*Id + s(q)*M with (cosh, sinh/r) for q > 0 and (cos, sin/r) for q < 0.
    The result has unit determinant up to rounding.

    Args:
        sigma: Array of shape (..., 2, 2), traceless
        tau: Duration, scalar or broadcastable against ``sigma.shape[:-2]``

    Returns:
        Array of the same shape
    """
    sigma = np.asarray(sigma, dtype=float)
    m = sigma * np.asarray(tau, dtype=float)[..., None, None]
    a = m[..., 0, 0]
    q = a * a + m[..., 0, 1] * m[..., 1, 0]
    r = np.sqrt(np.abs(q))
    pos = q >= 0
    c = np.where(pos, np.cosh(r), np.cos(r))
    small = r < 1e-4
    safe_r = np.where(small, 1.0, r)
    s = np.where(
        small,
        1.0 + q / 6.0 + q * q / 120.0,
        np.where(pos, np.sinh(safe_r), np.sin(safe_r)) / safe_r,
    )
    return c[..., None, None] * _IDENTITY + s[..., None, None] * m


@dataclass
class EvolutionState:
    """
    Evolution operator and moment of inertia of one blob.

    At creation W = I_mat = identity; W stays unimodular and I_mat symmetric
    positive definite with det(I_mat) >= 1.
    """
    W: np.ndarray = field(default_factory=lambda: np.eye(2))
    I_mat: np.ndarray = field(default_factory=lambda: np.eye(2))
    t0: float = 0.0
    t: float = 0.0

    @classmethod
    def fresh(cls, t0: float) -> "EvolutionState":
        """State of a blob created at t0."""
        return cls(W=np.eye(2), I_mat=np.eye(2), t0=float(t0), t=float(t0))

    def validate(self) -> None:
        """Check the state invariants."""
        require_finite("W", self.W)
        require_finite("I_mat", self.I_mat)
        if self.t < self.t0:
            raise InvalidInputError(f"State time {self.t} precedes creation time {self.t0}")
        if not np.allclose(self.I_mat, self.I_mat.T, rtol=1e-12, atol=0.0):
            raise InvalidInputError("I_mat is not symmetric")
        if np.linalg.eigvalsh(self.I_mat)[0] <= 0:
            raise InvalidInputError("I_mat is not positive definite")


def step_evolution(
    state: EvolutionState,
    sigma: GradientSample,
    params: FlowParams,
    tau: Optional[float] = None
) -> EvolutionState:
    """
    Advance a blob state through one step of the linear flow.

    W' = E W and I' = E I E^T + 2 kappa_d tau Id with E = exp(sigma tau).

    Args:
        state: Current state
        sigma: Gradient sample of the step
        params: Flow parameters
        tau: Step duration; defaults to ``params.dt`` (partial steps are shorter)

    Returns:
        The new state
    """
    tau = params.dt if tau is None else float(tau)
    mat = require_finite("sigma", sigma.sigma if isinstance(sigma, GradientSample) else sigma)
    E = expm_traceless(mat, tau)
    W = E @ state.W
    I_mat = E @ state.I_mat @ E.T + 2.0 * params.kappa_d * tau * _IDENTITY
    # Symmetrize rounding noise
    I_mat = 0.5 * (I_mat + I_mat.T)
    return EvolutionState(W=W, I_mat=I_mat, t0=state.t0, t=state.t + tau)


def evolve_state(
    state: EvolutionState,
    flow: FlowRealization,
    t_target: float
) -> EvolutionState:
    """
    Advance a single state to ``t_target`` through the shared sample stream.

    Args:
        state: State to advance
        flow: Flow realization
        t_target: Target time, >= state.t

    Returns:
        The advanced state
    """
    if t_target < state.t:
        raise InvalidInputError(f"Cannot evolve backwards from {state.t} to {t_target}")
    for k, tau in flow.segments(state.t, t_target):
        state = step_evolution(state, flow.sample(k), flow.params, tau=tau)
    state.t = float(t_target)
    return state


class HorizonMap:
    """
    Evolution operators W(t_h, t) into a fixed horizon time t_h.

    Products are accumulated backwards from the horizon, so each W(t_h, t_k) is a
    genuine flow map and stays well conditioned however far t_h lies ahead.
    """

    def __init__(self, flow: FlowRealization, t_horizon: float):
        """
        Precompute W(t_h, t_k) on the step grid.

        Args:
            flow: Flow realization
            t_horizon: Horizon time t_h >= flow.t_start
        """
        self.flow = flow
        self.t_horizon = float(t_horizon)
        k_last = flow.step_index(self.t_horizon)
        sigmas = flow.gradient_block(0, k_last + 1)
        maps = np.empty((k_last + 2, 2, 2))
        maps[k_last + 1] = np.eye(2)
        # W(t_h, t_k) for the partial last step
        maps[k_last] = expm_traceless(sigmas[k_last], self.t_horizon - flow.step_time(k_last))
        for k in range(k_last - 1, -1, -1):
            maps[k] = maps[k + 1] @ expm_traceless(sigmas[k], flow.params.dt)
        self._sigmas = sigmas
        self._maps = maps
        self._k_last = k_last

    def at(self, t0: np.ndarray) -> np.ndarray:
        """
        Return W(t_h, t0) for an array of start times t0 <= t_h.

        Args:
            t0: Start times, shape (n,)

        Returns:
            Array of shape (n, 2, 2)
        """
        t0 = np.atleast_1d(np.asarray(t0, dtype=float))
        if np.any(t0 > self.t_horizon + 1e-12):
            raise InvalidInputError("HorizonMap.at requires start times before the horizon")
        k = np.clip(
            np.floor((t0 - self.flow.t_start) / self.flow.params.dt).astype(int), 0, self._k_last
        )
        step_end = np.minimum(self.flow.t_start + (k + 1) * self.flow.params.dt, self.t_horizon)
        partial = expm_traceless(self._sigmas[k], np.maximum(step_end - t0, 0.0))
        return self._maps[np.minimum(k + 1, self._k_last + 1)] @ partial


def propagator(flow: FlowRealization, t_from: float, t_to: float) -> np.ndarray:
    """
    Global evolution operator W(t_to, t_from) of the linear flow.

    Args:
        flow: Flow realization
        t_from: Start time
        t_to: End time, >= t_from

    Returns:
        A unimodular 2x2 matrix
    """
    W = np.eye(2)
    for k, tau in flow.segments(t_from, t_to):
        W = expm_traceless(flow.sample(k).sigma, tau) @ W
    return W
