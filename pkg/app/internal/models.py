import math
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import pydantic
from pydantic import Field

from app.internal.geometry import DegenerateQuad, Quad, canonical_order

Vertex = tuple[float, float]


class DatasetKind(str, Enum):
    midv500 = "midv500"
    smartdoc = "smartdoc"


class BackgroundKind(str, Enum):
    flat = "flat"
    stripes = "stripes"
    checker = "checker"
    noise = "noise"


class ManifestEntry(pydantic.BaseModel, frozen=True):
    image: str
    gt: Annotated[list[Vertex], Field(min_length=4, max_length=4)]
    """Original-resolution pixels, counterclockwise."""
    aspect: float = Field(gt=0)
    tags: list[str] = []

    @pydantic.field_validator("gt")
    @classmethod
    def _gt_is_convex(cls, value: list[Vertex]) -> list[Vertex]:
        if not all(math.isfinite(c) for vertex in value for c in vertex):
            raise ValueError("gt coordinates must be finite")
        try:
            canonical_order(value)
        except DegenerateQuad:
            raise ValueError("gt quad is not convex")
        return value

    def quad(self) -> Quad:
        return Quad.from_points(self.gt)

    def resolve_image(self, base_dir: Path) -> Path:
        path = Path(self.image)
        return path if path.is_absolute() else base_dir / path


class EntryResult(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(ser_json_inf_nan="constants")

    index: int
    image: str
    detected: bool
    min_d: float = math.inf
    iou: float = 0.0
    iou_gt: float = 0.0
    mean_iou: float = 0.0
    ms: float = 0.0
    provenance: Optional[str] = None
    quad: Optional[list[Vertex]] = None
    tags: list[str] = []
    error: Optional[str] = None
    timings: dict[str, float] = {}

    def csv_row(self) -> list[str]:
        return [
            str(self.index),
            self.image,
            str(int(self.detected)),
            f"{self.min_d:.6f}" if math.isfinite(self.min_d) else "inf",
            f"{self.iou:.6f}",
            f"{self.iou_gt:.6f}",
            f"{self.mean_iou:.6f}",
            f"{self.ms:.2f}",
            self.provenance or "",
        ]


CSV_HEADER = ["index", "image", "detected", "min_d", "iou", "iou_gt", "mean_iou", "ms", "provenance"]


class SubsetStats(pydantic.BaseModel):
    count: int
    detected: int
    mean_min_d: Optional[float]
    """Over detected entries only; None when nothing was detected."""
    mean_iou: float
    mean_iou_gt: float
    mean_mean_iou: float
    rate_min_d: float
    """Share of entries with MinD at or below the success threshold."""
    rate_iou: float
    """Share of entries with IoU at or above the success threshold."""
    three_line: int = 0


class EvalReport(pydantic.BaseModel):
    model_config = pydantic.ConfigDict(ser_json_inf_nan="constants")

    entries: list[EntryResult]
    overall: SubsetStats
    by_tag: dict[str, SubsetStats] = {}
    quantiles: dict[str, int] = {}
    """Quantile label (e.g. "50%") to manifest index, ordered by IoU^gt."""
    min_d_threshold: float
    iou_threshold: float

    @pydantic.model_validator(mode="after")
    def _counts_match(self):
        if self.overall.count != len(self.entries):
            raise ValueError("Aggregate count does not match the number of entries")
        return self


class StageStats(pydantic.BaseModel):
    median_ms: float
    p95_ms: float


class BenchReport(pydantic.BaseModel):
    name: str
    images: int
    repetitions: int
    stages: dict[str, StageStats]
    total: StageStats


class LocateResponse(pydantic.BaseModel):
    image: str
    detected: bool
    quad: Optional[list[Vertex]] = None
    """Original-resolution pixels, counterclockwise from the vertex nearest the origin."""
    provenance: Optional[str] = None
    contour: Optional[float] = None
    contrast: Optional[float] = None
    combined: Optional[float] = None
    reason: Optional[str] = None
    timings: dict[str, float] = {}
