"""
Monte-Carlo estimate of the top Lyapunov exponent of the linear flow.
"""

from dataclasses import dataclass

import numpy as np

from config import FlowParams
from utils.logging import get_logger
from utils.validation import InvalidInputError

from .evolution import expm_traceless
from .realization import CHUNK_STEPS, FlowRealization

logger = get_logger(__name__)

# Renormalize tangent vectors this often to keep norms representable
_RENORM_EVERY = 32


@dataclass(frozen=True)
class LyapunovEstimate:
    """Lyapunov exponent with its standard error over independent realizations."""
    lambda_: float
    stderr: float
    n_steps: int
    n_samples: int
    dt: float

    @property
    def relative_error(self) -> float:
        """stderr / lambda, infinite for a vanishing exponent."""
        return self.stderr / self.lambda_ if self.lambda_ > 0 else float("inf")


def _sample_seeds(master_seed: int, n_samples: int) -> np.ndarray:
    return np.random.SeedSequence(master_seed).generate_state(n_samples, dtype=np.uint64)


def estimate_lyapunov(params: FlowParams, n_steps: int, n_samples: int) -> LyapunovEstimate:
    """
    Estimate lambda = <log|W(t) e|>/t over realizations and both unit vectors e.

    Each sample is an independent realization whose seed is derived from
    ``params.seed``; realizations are evolved together as a batch.

    Args:
        params: Flow parameters
        n_steps: Number of steps per realization
        n_samples: Number of independent realizations (>= 2)

    Returns:
        The estimate and its standard error
    """
    if n_steps < 1 or n_samples < 2:
        raise InvalidInputError("estimate_lyapunov needs n_steps >= 1 and n_samples >= 2")

    seeds = _sample_seeds(params.seed, n_samples)
    flows = [
        FlowRealization(params.model_copy(update={"seed": int(s)})) for s in seeds
    ]
    logger.info(
        f"Estimating Lyapunov exponent: D={params.D}, dt={params.dt}, "
        f"{n_steps} steps x {n_samples} samples"
    )

    vectors = np.broadcast_to(np.eye(2), (n_samples, 2, 2)).copy()
    log_growth = np.zeros((n_samples, 2))
    done = 0
    while done < n_steps:
        stop = min(n_steps, (done // CHUNK_STEPS + 1) * CHUNK_STEPS)
        block = np.stack([f.gradient_block(done, stop, cache=False) for f in flows], axis=0)
        for j in range(stop - done):
            vectors = expm_traceless(block[:, j], params.dt) @ vectors
            if (done + j + 1) % _RENORM_EVERY == 0:
                norms = np.linalg.norm(vectors, axis=1)
                log_growth += np.log(norms)
                vectors /= norms[:, None, :]
        done = stop

    log_growth += np.log(np.linalg.norm(vectors, axis=1))
    t_total = n_steps * params.dt
    per_sample = log_growth.mean(axis=1) / t_total
    lam = float(per_sample.mean())
    stderr = float(per_sample.std(ddof=1) / np.sqrt(n_samples))

    estimate = LyapunovEstimate(
        lambda_=lam, stderr=stderr, n_steps=n_steps, n_samples=n_samples, dt=params.dt
    )
    if lam <= 0:
        logger.warning(f"Non-positive Lyapunov estimate {lam:.4g} +- {stderr:.2g}")
    elif estimate.relative_error > 0.05:
        logger.warning(
            f"Lyapunov estimate {lam:.4g} has relative error {estimate.relative_error:.2%} > 5%"
        )
    else:
        logger.info(f"Lyapunov exponent {lam:.4g} +- {stderr:.2g}")
    return estimate
