"""
Shared fixtures and the --runslow switch for desk-scale runs.
"""

import numpy as np
import pytest

from config import ExperimentConfig, FlowParams
from contour import Contour
from scalar import BlobDatabase, FieldGrid, GridSpec


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale tests")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def flow_params():
    return FlowParams(D=0.1, kappa_d=1e-4, dt=0.01, seed=11)


def circle(radius: float, n: int = 1000, center=(0.0, 0.0), contour_id: int = 0) -> Contour:
    """Regular n-gon inscribed in a circle."""
    phi = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    v = np.column_stack([center[0] + radius * np.cos(phi), center[1] + radius * np.sin(phi)])
    return Contour(vertices=v, closed=True, contour_id=contour_id)


def gaussian_bump_grid(radius: float, pixel: float, n: int, offset_sigma: float = 4.0) -> FieldGrid:
    """
    Radial Gaussian minus a constant whose zero set is a circle of ``radius``.

    The grid is centered on the origin.
    """
    sigma = radius / offset_sigma
    spec = GridSpec(origin=(-0.5 * n * pixel, -0.5 * n * pixel), pixel_size=pixel, nx=n, ny=n)
    X, Y = np.meshgrid(spec.x_centers, spec.y_centers, indexing="ij")
    r2 = X ** 2 + Y ** 2
    values = np.exp(-0.5 * r2 / sigma ** 2) - np.exp(-0.5 * radius ** 2 / sigma ** 2)
    return FieldGrid(spec=spec, values=values)


def empty_db(window=(-10.0, -10.0, 10.0, 10.0), **kwargs) -> BlobDatabase:
    return BlobDatabase(window, **kwargs)


@pytest.fixture
def small_config(tmp_path):
    """Tiny experiment with a fixed Lyapunov exponent, writing into tmp_path."""
    return ExperimentConfig.model_validate({
        "name": "tiny",
        "flow": {"D": 0.1, "kappa_d": 1e-3, "dt": 0.01, "seed": 4, "lambda_estimate": 1.0},
        "pumping": {"nu_over_lambda": 0.05, "spawn_frame": "window", "spawn_interval_lambda": 0.5},
        "window": {"x0": -8.0, "y0": -8.0, "width": 16.0, "height": 16.0},
        "grid": {"nx": 64, "ny": 64, "tile": 16},
        "T_lambda": 1.0,
        "snapshot_t_lambdas": [0.5],
        "output_dir": str(tmp_path / "run"),
        "seed": 9,
    })
