"""
Scalar module: blob database under Poisson pumping and field rendering.
"""

from .blobs import BlobDatabase, Pumping, cull, evolve_to, spawn_blobs, support_intersects
from .moments import FieldMoments, field_moments
from .render import FieldGrid, GridSpec, TileIndex, eval_point, render

__all__ = [
    "BlobDatabase",
    "FieldGrid",
    "FieldMoments",
    "GridSpec",
    "Pumping",
    "TileIndex",
    "cull",
    "eval_point",
    "evolve_to",
    "field_moments",
    "render",
    "spawn_blobs",
    "support_intersects",
]
