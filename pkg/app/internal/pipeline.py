from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from app.internal.edges import EdgeMaps, compute_edge_maps
from app.internal.env_settings import PipelineConfig
from app.internal.geometry import CameraIntrinsics, Quad
from app.internal.hough import DetectedLine, detect_lines
from app.internal.imaging import RgbImage, ScaledImage, downscale_working
from app.internal.ranking.candidates import Provenance, ScoredQuad, enumerate_candidates
from app.internal.ranking.contrast import rank_final
from app.internal.refine import refine_quad
from app.util.log import logger
from app.util.time import Millisecond, StageTimer


class LocalizationInputError(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class TemplateSpec:
    """Physical size of the document; only the ratio matters."""

    width: float
    height: float

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValueError("Template dimensions must be positive")

    @classmethod
    def from_aspect(cls, aspect: float) -> TemplateSpec:
        return cls(width=aspect, height=1.0)

    @property
    def aspect(self) -> float:
        return self.width / self.height


@dataclass(frozen=True)
class LocalizationResult:
    quad: Quad
    """In original image coordinates."""
    working_quad: Quad
    provenance: Provenance
    contour: float
    contrast: float
    combined: float
    restored_side: Optional[int] = None
    timings: dict[str, Millisecond] = field(default_factory=dict[str, Millisecond])


@dataclass(frozen=True)
class NoDetection:
    reason: str
    timings: dict[str, Millisecond] = field(default_factory=dict[str, Millisecond])


@dataclass(frozen=True)
class DebugArtifacts:
    """Intermediate products of one run, collected when requested."""

    working: ScaledImage
    edge_maps: EdgeMaps
    h_lines: list[DetectedLine]
    v_lines: list[DetectedLine]
    candidates: list[ScoredQuad]
    winner: Optional[ScoredQuad]


def _unsupported_side(best: ScoredQuad, cfg: PipelineConfig) -> Optional[int]:
    """The restored side of a three-line winner when too little of it shows in the edge map."""
    if best.restored_side is None or best.restored_coverage is None:
        return None
    if best.restored_coverage >= cfg.candidates.c_min:
        return None
    return best.restored_side


def localize(
    img: RgbImage,
    template: TemplateSpec,
    cfg: Optional[PipelineConfig] = None,
    debug: Optional[list[DebugArtifacts]] = None,
) -> LocalizationResult | NoDetection:
    """
    Locate the document in `img`. When `debug` is given the intermediate
    products of the run are appended to it.
    """
    cfg = cfg or PipelineConfig()
    if min(img.width, img.height) < cfg.min_input_side:
        raise LocalizationInputError(
            f"Image {img.width}x{img.height} is smaller than {cfg.min_input_side} px on its short side"
        )
    r = template.aspect
    timer = StageTimer()

    with timer.stage("downscale"):
        scaled = downscale_working(img, cfg.working_short)
    work = scaled.image
    cam = CameraIntrinsics.for_image(work.width, work.height, cfg.focal_coeff)

    with timer.stage("edges"):
        maps = compute_edge_maps(work, cfg.edges)
    with timer.stage("hough"):
        h_lines, v_lines = detect_lines(maps.horizontal, maps.vertical, cfg.hough)
    with timer.stage("candidates"):
        candidates = enumerate_candidates(h_lines, v_lines, maps, cam, r, cfg.candidates)
    with timer.stage("contrast"):
        best = rank_final(candidates, work, r, cfg.contrast, cfg.candidates.k)

    if debug is not None:
        debug.append(DebugArtifacts(scaled, maps, h_lines, v_lines, candidates, best))

    if best is None:
        logger.info(
            "No document found",
            horizontal_lines=len(h_lines),
            vertical_lines=len(v_lines),
        )
        return NoDetection(reason="no candidate passed the filters", timings=timer.timings)

    with timer.stage("refine"):
        if cfg.refine.enabled:
            quad = refine_quad(img, best.quad, cfg, _unsupported_side(best, cfg), r)
        else:
            quad = best.quad.transformed(scaled.to_source)

    logger.debug(
        "Localized document",
        provenance=best.provenance,
        contour=round(best.contour, 3),
        contrast=round(best.contrast or 0.0, 3),
        total_ms=round(timer.total, 1),
    )
    return LocalizationResult(
        quad=quad,
        working_quad=best.quad,
        provenance=best.provenance,
        contour=best.contour,
        contrast=best.contrast or 0.0,
        combined=best.combined or 0.0,
        restored_side=best.restored_side,
        timings=timer.timings,
    )
