"""
Contour module: isoline extraction and per-contour geometry.
"""

from .geometry import (
    arc_weights,
    bounding_aspect_ratio,
    diameter,
    gyration_radius,
    mean_radius,
    minimum_bounding_rectangle,
    perimeter,
)
from .marching import Contour, MarchingSquares, extract_isolines

__all__ = [
    "Contour",
    "MarchingSquares",
    "arc_weights",
    "bounding_aspect_ratio",
    "diameter",
    "extract_isolines",
    "gyration_radius",
    "mean_radius",
    "minimum_bounding_rectangle",
    "perimeter",
]
