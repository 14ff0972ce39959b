"""
Loewner module: chordal reduction of isolines, the discrete zipper and driving-function diffusivity.
"""

from .chordal import contraction_factors, prepare_chordal, resample_polyline, signed_area
from .diffusivity import (
    DiffusivityEstimate,
    brownian_drivings,
    effective_diffusivity,
    increment_autocorrelation,
    resample_driving,
)
from .zipper import (
    ChordalCurve,
    DrivingFunction,
    apply_slit_maps,
    rescale_curve,
    unzip,
    zip_curve,
)

__all__ = [
    "ChordalCurve",
    "DiffusivityEstimate",
    "DrivingFunction",
    "apply_slit_maps",
    "brownian_drivings",
    "contraction_factors",
    "effective_diffusivity",
    "increment_autocorrelation",
    "prepare_chordal",
    "resample_driving",
    "resample_polyline",
    "rescale_curve",
    "signed_area",
    "unzip",
    "zip_curve",
]
