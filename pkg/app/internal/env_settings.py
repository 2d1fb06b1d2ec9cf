import math
from pathlib import Path
from typing import Optional

from pydantic import BaseModel, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class EdgeParams(BaseModel):
    morph_wing: int = Field(default=1, gt=0)
    """Half width of the opening/closing window, the window is 2*wing+1 samples."""
    nms_abs_threshold: float = Field(default=1.0, gt=0)
    neighbor_reach: int = Field(default=3, gt=0)
    size_fraction: float = Field(default=0.10, gt=0)
    fill_value: float = Field(default=1.0, gt=0)
    blur_sigma: float = Field(default=1.0, gt=0)
    blur_wing: int = Field(default=3, gt=0)


class HoughSettings(BaseModel):
    peaks_per_part: int = Field(default=15, gt=0)
    rel_threshold: float = Field(default=0.2, gt=0)
    min_separation: float = Field(default=10.0, gt=0)
    """Minimum l2 distance between selected peaks, in accumulator index units."""
    bands: int = Field(default=3, gt=0)


class CandidateConfig(BaseModel):
    k: int = Field(default=4, ge=1)
    aspect_tol: float = Field(default=0.07, gt=0)
    angle_tol: float = Field(default=5.0, gt=0)
    """Degrees."""

    # Side statistic bounds. w and w' are in units of the edge map fill value.
    c_min: float = Field(default=0.6, ge=0, le=1)
    c_max: float = Field(default=1.0, ge=0, le=1)
    w_min: float = Field(default=1.0, ge=0)
    w_max: float = math.inf
    w_prime_min: float = Field(default=0.0, ge=0)
    w_prime_max: float = Field(default=5.0, ge=0)
    """Sum over both flanks."""

    flank_length: int = Field(default=10, gt=0)
    frame_expand: float = Field(default=0.25, ge=0)
    """Fraction of the frame size added on each side when testing vertices for being in frame."""
    min_side_px: float = Field(default=8.0, gt=0)
    min_area_fraction: float = Field(default=0.005, gt=0)


class ContrastConfig(BaseModel):
    norm_height: int = Field(default=64, ge=8)
    outer_margin: float = Field(default=0.15, gt=0, lt=0.5)
    inner_margin: float = Field(default=0.15, gt=0, lt=0.5)
    bins_per_channel: int = Field(default=8, ge=2, le=32)
    combine_coeff: float = Field(default=0.011, gt=0)
    score_scale: float = Field(default=100.0, gt=0)


class RefineSettings(BaseModel):
    enabled: bool = True
    scale: int = Field(default=3, gt=0)
    vicinity: float = Field(default=2.0, gt=0)
    """Half height of the refinement strip in working pixels."""
    min_angle_deg: float = Field(default=10.0, gt=0)
    min_side_px: float = Field(default=8.0, gt=0)


class PipelineConfig(BaseSettings):
    model_config = SettingsConfigDict(
        env_prefix="DOCLOC_",
        env_nested_delimiter="__",
        nested_model_default_partial_update=True,
        env_file=(".env.local", ".env"),
        extra="ignore",
    )

    working_short: int = Field(default=240, ge=16)
    focal_coeff: float = Field(default=0.705, gt=0)
    """Focal length as a fraction of the working image diagonal."""
    min_input_side: int = Field(default=64, ge=8)
    log_level: str = "INFO"

    edges: EdgeParams = EdgeParams()
    hough: HoughSettings = HoughSettings()
    candidates: CandidateConfig = CandidateConfig()
    contrast: ContrastConfig = ContrastConfig()
    refine: RefineSettings = RefineSettings()


def load_config(path: Optional[Path] = None) -> PipelineConfig:
    """Load the configuration, optionally from a specific key-value file instead of `.env`."""
    if path is None:
        return PipelineConfig()
    if not path.is_file():
        raise FileNotFoundError(f"Config file does not exist: {path}")
    return PipelineConfig(_env_file=path)  # pyright: ignore[reportCallIssue]
