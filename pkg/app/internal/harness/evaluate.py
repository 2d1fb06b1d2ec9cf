"""
Batch evaluation of the localizer over a manifest.

Every entry is localized independently, optionally in a process pool, and
scored with MinD, IoU, IoU^gt and MeanIoU. Results are keyed by manifest
index so the report does not depend on completion order.
"""

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import cv2
import numpy as np
from terminaltables import AsciiTable

from app.internal.env_settings import PipelineConfig
from app.internal.geometry import Quad
from app.internal.harness.overlay import write_overlay
from app.internal.metrics import iou, iou_gt, mean_iou, min_d
from app.internal.models import CSV_HEADER, EntryResult, EvalReport, ManifestEntry, SubsetStats
from app.internal.pipeline import LocalizationResult, TemplateSpec, localize
from app.util.image_io import ImageDecodeError, load_image
from app.util.log import logger

MIN_D_THRESHOLD = 0.017
IOU_THRESHOLD = 0.9
QUANTILES = (0.0, 0.25, 0.5, 0.75, 1.0)

# decode, geometry and input-size errors are all ValueError subclasses
_ENTRY_ERRORS = (ValueError, OSError, cv2.error)


def evaluate_entry(index: int, entry: ManifestEntry, cfg: PipelineConfig, base_dir: Path) -> EntryResult:
    """Localize one manifest entry and score it against its ground truth."""
    tags = list(entry.tags)
    image_path = entry.resolve_image(base_dir)
    try:
        img = load_image(image_path)
        truth = entry.quad()
        template = TemplateSpec.from_aspect(entry.aspect)
        start = time.perf_counter()
        outcome = localize(img, template, cfg)
        ms = (time.perf_counter() - start) * 1000.0
    except _ENTRY_ERRORS as e:
        logger.warning("Entry failed", index=index, image=str(image_path), error=str(e))
        return EntryResult(index=index, image=entry.image, detected=False, tags=tags, error=str(e))

    timings = {name: float(value) for name, value in outcome.timings.items()}
    if not isinstance(outcome, LocalizationResult):
        return EntryResult(
            index=index,
            image=entry.image,
            detected=False,
            mean_iou=mean_iou(None, truth, img.size),
            ms=ms,
            tags=tags,
            timings=timings,
        )
    q = outcome.quad
    return EntryResult(
        index=index,
        image=entry.image,
        detected=True,
        min_d=min_d(q, truth, template),
        iou=iou(q, truth),
        iou_gt=iou_gt(q, truth, template),
        mean_iou=mean_iou(q, truth, img.size),
        ms=ms,
        provenance=outcome.provenance,
        quad=[(p.x, p.y) for p in q.vertices],
        tags=tags,
        timings=timings,
    )


def _evaluate_job(job: tuple[int, ManifestEntry, PipelineConfig, Path]) -> EntryResult:
    return evaluate_entry(*job)


def summarize(
    results: Sequence[EntryResult],
    min_d_threshold: float = MIN_D_THRESHOLD,
    iou_threshold: float = IOU_THRESHOLD,
) -> SubsetStats:
    """Means over all entries; undetected entries count as failures with IoU 0."""
    count = len(results)
    if count == 0:
        return SubsetStats(
            count=0,
            detected=0,
            mean_min_d=None,
            mean_iou=0.0,
            mean_iou_gt=0.0,
            mean_mean_iou=0.0,
            rate_min_d=0.0,
            rate_iou=0.0,
        )
    finite_d = [r.min_d for r in results if r.detected and math.isfinite(r.min_d)]
    return SubsetStats(
        count=count,
        detected=sum(r.detected for r in results),
        mean_min_d=float(np.mean(finite_d)) if finite_d else None,
        mean_iou=float(np.mean([r.iou for r in results])),
        mean_iou_gt=float(np.mean([r.iou_gt for r in results])),
        mean_mean_iou=float(np.mean([r.mean_iou for r in results])),
        rate_min_d=sum(r.min_d <= min_d_threshold for r in results) / count,
        rate_iou=sum(r.iou >= iou_threshold for r in results) / count,
        three_line=sum(r.provenance == "three-line" for r in results),
    )


def quantile_indices(results: Sequence[EntryResult]) -> dict[str, int]:
    """Manifest index of the entry at each quantile of IoU^gt, worst first."""
    if not results:
        return {}
    ranked = sorted(results, key=lambda r: (r.iou_gt, r.index))
    last = len(ranked) - 1
    return {f"{round(p * 100)}%": ranked[int(round(p * last))].index for p in QUANTILES}


def build_report(
    results: Iterable[EntryResult],
    min_d_threshold: float = MIN_D_THRESHOLD,
    iou_threshold: float = IOU_THRESHOLD,
) -> EvalReport:
    entries = sorted(results, key=lambda r: r.index)
    tags = sorted({tag for r in entries for tag in r.tags})
    return EvalReport(
        entries=entries,
        overall=summarize(entries, min_d_threshold, iou_threshold),
        by_tag={
            tag: summarize([r for r in entries if tag in r.tags], min_d_threshold, iou_threshold)
            for tag in tags
        },
        quantiles=quantile_indices(entries),
        min_d_threshold=min_d_threshold,
        iou_threshold=iou_threshold,
    )


def write_entries_csv(entries: Sequence[EntryResult], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(CSV_HEADER)
        for entry in entries:
            writer.writerow(entry.csv_row())


def _write_quantile_overlays(
    report: EvalReport, manifest: Sequence[ManifestEntry], base_dir: Path, out_dir: Path
) -> None:
    by_index = {r.index: r for r in report.entries}
    for label, index in report.quantiles.items():
        result = by_index[index]
        entry = manifest[index]
        try:
            img = load_image(entry.resolve_image(base_dir))
        except ImageDecodeError:
            continue
        quad: Optional[Quad] = Quad.from_points(result.quad) if result.quad else None
        name = f"quantile_{label.rstrip('%')}_{index}.png"
        write_overlay(img, quad, entry.quad(), out_dir / "overlays" / name)


def evaluate(
    manifest: Sequence[ManifestEntry],
    cfg: PipelineConfig,
    out_dir: Path,
    jobs: int = 1,
    base_dir: Path = Path("."),
) -> EvalReport:
    """
    Evaluate every manifest entry and write `entries.csv`, `summary.json`
    and the quantile overlays into `out_dir`. Entries that fail are
    recorded with their error and the run continues.
    """
    work = [(i, entry, cfg, base_dir) for i, entry in enumerate(manifest)]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_evaluate_job, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        results = [_evaluate_job(job) for job in work]

    report = build_report(results)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_entries_csv(report.entries, out_dir / "entries.csv")
    (out_dir / "summary.json").write_text(report.model_dump_json(indent=2), encoding="utf-8")
    _write_quantile_overlays(report, manifest, base_dir, out_dir)

    failed = sum(r.error is not None for r in report.entries)
    logger.info(
        "Evaluation finished",
        entries=report.overall.count,
        detected=report.overall.detected,
        failed=failed,
        rate_min_d=round(report.overall.rate_min_d, 4),
        mean_iou_gt=round(report.overall.mean_iou_gt, 4),
    )
    return report


def render_eval_table(report: EvalReport) -> str:
    """Statistic / subset / value rows for the whole run and every tag."""
    rows = [["statistic", "subset", "count", "value"]]
    subsets = [("all", report.overall), *report.by_tag.items()]

    def add(statistic: str, pick: Callable[[SubsetStats], Optional[float]], percent: bool = False) -> None:
        for subset, stats in subsets:
            value = pick(stats)
            if value is None:
                text = "-"
            else:
                text = f"{100 * value:.2f}%" if percent else f"{value:.4f}"
            rows.append([statistic, subset, str(stats.count), text])

    add("mean IoU^gt", lambda s: s.mean_iou_gt)
    add("mean IoU", lambda s: s.mean_iou)
    add("mean MeanIoU", lambda s: s.mean_mean_iou)
    add(f"MinD <= {report.min_d_threshold}", lambda s: s.rate_min_d, percent=True)
    add(f"IoU >= {report.iou_threshold}", lambda s: s.rate_iou, percent=True)
    table = AsciiTable(rows)
    table.justify_columns[2] = "right"
    table.justify_columns[3] = "right"
    return table.table
