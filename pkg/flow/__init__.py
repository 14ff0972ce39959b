"""
Flow module: white-in-time linear velocity field and blob evolution operators.
"""

from .evolution import (
    EvolutionState,
    HorizonMap,
    evolve_state,
    expm_traceless,
    propagator,
    step_evolution,
)
from .lyapunov import LyapunovEstimate, estimate_lyapunov
from .realization import (
    CHUNK_STEPS,
    FlowRealization,
    GradientSample,
    sample_gradient,
    traceless_gaussian,
)

__all__ = [
    "CHUNK_STEPS",
    "EvolutionState",
    "FlowRealization",
    "GradientSample",
    "HorizonMap",
    "LyapunovEstimate",
    "estimate_lyapunov",
    "evolve_state",
    "expm_traceless",
    "propagator",
    "sample_gradient",
    "step_evolution",
    "traceless_gaussian",
]
