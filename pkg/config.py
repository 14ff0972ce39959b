"""
Configuration settings for the batchelor-isolines application.
"""

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from utils.validation import ConfigurationError


class FlowParams(BaseModel):
    """
    Parameters of the white-in-time, spatially linear velocity field.

    Lengths are in units of the pumping scale L.
    """
    D: float = Field(0.1, ge=0.0, description="Gradient-covariance amplitude (1/time)")
    kappa_d: float = Field(1e-4, ge=0.0, description="Molecular diffusivity (L^2/time)")
    dt: float = Field(1e-2, gt=0.0, description="Integration step (time)")
    seed: int = Field(0, ge=0, lt=2**64, description="64-bit RNG seed of the flow realization")
    lambda_estimate: Optional[float] = Field(
        None, ge=0.0, description="Measured Lyapunov exponent, filled in by calibration"
    )

    @model_validator(mode="after")
    def step_resolves_stretching(self) -> "FlowParams":
        """Require the step to be much shorter than the stretching time."""
        if self.lambda_estimate and self.dt * self.lambda_estimate >= 0.05:
            raise ValueError(
                f"dt*lambda = {self.dt * self.lambda_estimate:.3g} must be below 0.05"
            )
        return self


class PumpingConfig(BaseModel):
    """
    Poisson pumping of Gaussian blobs.
    """
    nu_over_lambda: float = Field(
        0.01, gt=0.0, description="Pumping rate per unit L^2 area in units of lambda"
    )
    amp_sigma: float = Field(1.0, gt=0.0, description="Standard deviation of the blob amplitude")
    spawn_margin: Optional[float] = Field(
        None, ge=3.0, description="Spawn border around the window; default max(3, 0.5*T*lambda)"
    )
    spawn_frame: Literal["window", "preimage"] = Field(
        "preimage", description="Spawn uniformly in the window or in its preimage at the horizon"
    )
    cull_threshold: Optional[float] = Field(
        None, ge=0.0, description="Minimum retained peak amplitude; default 1e-4*amp_sigma"
    )
    support_sigmas: float = Field(6.0, gt=0.0, description="Truncation radius in blob sigmas")
    spawn_interval_lambda: float = Field(
        0.5, gt=0.0, description="Spawn/evolve/cull cycle length in units of 1/lambda"
    )

    def margin_for(self, t_lambda: float) -> float:
        """Spawn margin for a run of length t_lambda."""
        if self.spawn_margin is not None:
            return self.spawn_margin
        return max(3.0, 0.5 * t_lambda)

    def threshold(self) -> float:
        """Effective cull threshold."""
        if self.cull_threshold is not None:
            return self.cull_threshold
        return 1e-4 * self.amp_sigma


class WindowConfig(BaseModel):
    """
    Axis-aligned render window, in units of L.
    """
    x0: float = -75.0
    y0: float = -75.0
    width: float = Field(150.0, gt=0.0)
    height: float = Field(150.0, gt=0.0)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        """Return (xmin, ymin, xmax, ymax)."""
        return (self.x0, self.y0, self.x0 + self.width, self.y0 + self.height)


class GridConfig(BaseModel):
    """
    Pixel lattice of the rendered snapshot.
    """
    nx: int = Field(4096, ge=4)
    ny: int = Field(4096, ge=4)
    tile: int = Field(128, ge=8, description="Render tile edge in pixels")


class AnalysisConfig(BaseModel):
    """
    Toggles and fit windows of the contour / fractal / PDF stages.
    """
    level: float = 0.0
    qs: List[float] = Field(default_factory=lambda: [0.0, 2.0, 4.0])
    epsilon_ratio: float = Field(2.0**0.5, gt=1.0)
    below_L: Optional[Tuple[float, float]] = Field(
        None, description="Fit window below L; default [2*r_d, L/2]"
    )
    above_L: Optional[Tuple[float, float]] = Field(
        None, description="Fit window above L; default [2L, window/8]"
    )
    min_gyration_for_fractal: float = Field(3.0, gt=0.0)
    n_bins: int = Field(40, ge=10)
    left_tail: Optional[Tuple[float, float]] = None
    right_tail_perimeter: Optional[Tuple[float, float]] = None
    right_tail_size: Optional[Tuple[float, float]] = None
    min_perimeter_pixels: float = Field(4.0, ge=0.0)
    radius_weighting: Literal["arc", "vertex"] = "arc"
    run_fractal: bool = True
    run_pdf: bool = True


class LoewnerConfig(BaseModel):
    """
    Chordal reduction, contraction and diffusivity-fit settings.
    """
    min_perimeter: float = Field(10.0, gt=0.0)
    drop_fraction: float = Field(0.05, ge=0.0, lt=1.0)
    spacing: Optional[float] = Field(None, gt=0.0, description="Resampling step; default r_d")
    max_points: int = Field(100_000, ge=10)
    contraction: Literal["none", "L_over_rd", "exp_lambda_T", "custom"] = "none"
    factor_x: float = Field(1.0, gt=0.0)
    factor_y: float = Field(1.0, gt=0.0)
    t_window: Optional[Tuple[float, float]] = Field(
        None, description="Capacity-time fit window; default [5%, 50%] of the common span"
    )
    n_ladder: int = Field(400, ge=10)


class ExperimentConfig(BaseModel):
    """
    A complete experiment: flow, pumping, window, grid, analysis and output.
    """
    name: str = "desk"
    flow: FlowParams = Field(default_factory=FlowParams)
    pumping: PumpingConfig = Field(default_factory=PumpingConfig)
    window: WindowConfig = Field(default_factory=WindowConfig)
    grid: GridConfig = Field(default_factory=GridConfig)
    T_lambda: float = Field(20.0, ge=0.0)
    snapshot_t_lambdas: List[float] = Field(default_factory=list)
    analysis: AnalysisConfig = Field(default_factory=AnalysisConfig)
    loewner: LoewnerConfig = Field(default_factory=LoewnerConfig)
    output_dir: Optional[str] = None
    seed: int = Field(0, ge=0)
    calibration_steps: int = Field(20_000, ge=100)
    calibration_samples: int = Field(200, ge=2)

    @field_validator("snapshot_t_lambdas")
    @classmethod
    def snapshots_sorted(cls, v: List[float]) -> List[float]:
        """Snapshot times must be non-negative and increasing."""
        if any(t < 0 for t in v) or list(v) != sorted(v):
            raise ValueError("snapshot_t_lambdas must be non-negative and increasing")
        return v

    @property
    def pixel_size(self) -> float:
        """Resolution scale r_d."""
        return self.window.width / self.grid.nx


class Settings(BaseSettings):
    """
    Application settings loaded from environment variables.
    """
    log_level: str = Field("INFO")
    log_dir: str = Field("logs")
    default_output_dir: str = Field("./output")
    workers: int = Field(1, ge=1)

    model_config = SettingsConfigDict(env_prefix="BATCHELOR_", env_file=".env", extra="ignore")


def load_experiment_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment configuration from a JSON file.

    Args:
        path: Path of the JSON config file

    Returns:
        The validated experiment configuration

    Raises:
        ConfigurationError: If the file is missing, not JSON, or fails validation
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
        return ExperimentConfig.model_validate(raw)
    except FileNotFoundError as e:
        raise ConfigurationError(f"Config file not found: {path}", details={"path": str(path)}) from e
    except json.JSONDecodeError as e:
        raise ConfigurationError(
            f"Config file {path} is not valid JSON: {e}", details={"path": str(path)}
        ) from e
    except ValidationError as e:
        raise ConfigurationError(
            f"Invalid config {path}: {e.error_count()} error(s)",
            details={"path": str(path), "errors": e.errors(include_url=False)},
        ) from e


# Create global settings instance
settings = Settings()
