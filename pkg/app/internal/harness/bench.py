"""
Single-threaded timing of the localizer, per stage and in total.
"""

from pathlib import Path
from typing import Sequence

import cv2
import numpy as np
from terminaltables import AsciiTable

from app.internal.env_settings import PipelineConfig
from app.internal.imaging import RgbImage
from app.internal.models import BenchReport, ManifestEntry, StageStats
from app.internal.pipeline import TemplateSpec, localize
from app.util.image_io import load_image
from app.util.log import logger

STAGES = ("downscale", "edges", "hough", "candidates", "contrast", "refine")
MIN_IMAGES = 10


class BenchError(ValueError):
    pass


def _stats(samples: Sequence[float]) -> StageStats:
    if not samples:
        return StageStats(median_ms=0.0, p95_ms=0.0)
    values = np.asarray(samples, dtype=np.float64)
    return StageStats(median_ms=float(np.median(values)), p95_ms=float(np.percentile(values, 95)))


def bench(
    entries: Sequence[ManifestEntry],
    repetitions: int,
    cfg: PipelineConfig,
    base_dir: Path = Path("."),
    name: str = "manifest",
) -> BenchReport:
    """
    Localize every entry `repetitions` times. Images are decoded once up
    front so only the pipeline is timed; each stage gets a median and a
    95th percentile over all runs.
    """
    if not entries:
        raise BenchError("Nothing to benchmark: the manifest is empty")
    if repetitions < 1:
        raise BenchError(f"Repetitions must be at least 1, got {repetitions}")
    if len(entries) < MIN_IMAGES:
        raise BenchError(f"Stable timings need at least {MIN_IMAGES} images, got {len(entries)}")

    previous_threads = cv2.getNumThreads()
    cv2.setNumThreads(1)
    try:
        images: list[tuple[RgbImage, TemplateSpec]] = [
            (load_image(e.resolve_image(base_dir)), TemplateSpec.from_aspect(e.aspect)) for e in entries
        ]
        per_stage: dict[str, list[float]] = {stage: [] for stage in STAGES}
        totals: list[float] = []
        for _ in range(repetitions):
            for img, template in images:
                outcome = localize(img, template, cfg)
                for stage in STAGES:
                    if stage in outcome.timings:
                        per_stage[stage].append(float(outcome.timings[stage]))
                totals.append(float(sum(outcome.timings.values())))
    finally:
        cv2.setNumThreads(previous_threads)

    report = BenchReport(
        name=name,
        images=len(images),
        repetitions=repetitions,
        stages={stage: _stats(samples) for stage, samples in per_stage.items()},
        total=_stats(totals),
    )
    logger.info("Benchmark finished", name=name, median_ms=round(report.total.median_ms, 2))
    return report


def render_bench_table(report: BenchReport) -> str:
    rows = [["stage", "median ms", "p95 ms"]]
    for stage, stats in report.stages.items():
        rows.append([stage, f"{stats.median_ms:.2f}", f"{stats.p95_ms:.2f}"])
    rows.append(["total", f"{report.total.median_ms:.2f}", f"{report.total.p95_ms:.2f}"])
    table = AsciiTable(rows, title=f" {report.name}: {report.images} images x {report.repetitions} ")
    table.inner_footing_row_border = True
    for column in (1, 2):
        table.justify_columns[column] = "right"
    return table.table
