"""
Fractal module: box counting and generalized dimensions of contours.
"""

from .boxcount import BoxCountCurve, box_counts, box_masses, epsilon_ladder
from .dimensions import (
    MIN_FIT_SCALES,
    DimensionEstimate,
    EnsembleDimension,
    ensemble_dimension,
    generalized_dimension,
    local_slope,
)

__all__ = [
    "MIN_FIT_SCALES",
    "BoxCountCurve",
    "DimensionEstimate",
    "EnsembleDimension",
    "box_counts",
    "box_masses",
    "ensemble_dimension",
    "epsilon_ladder",
    "generalized_dimension",
    "local_slope",
]
