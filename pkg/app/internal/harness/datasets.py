"""
Converters from the native ground truth of public document datasets to
manifest lines. Only annotations are read; frames stay where they are
except for SmartDoc videos, whose frames are extracted once.
"""

import re
import xml.etree.ElementTree as ET
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional

import cv2
import numpy as np
import pydantic
from pydantic_core import from_json
from shapely.geometry import Polygon, box

from app.internal.geometry import DegenerateQuad, Quad
from app.internal.harness.manifest import write_manifest
from app.internal.models import DatasetKind, ManifestEntry
from app.util.image_io import ImageDecodeError, image_size
from app.util.log import logger

SMARTDOC_ASPECT = 210.0 / 297.0
SMARTDOC_BACKGROUNDS = ("background01", "background02", "background03", "background04")

MIDV500_LAYOUT = """expected MIDV-500 layout:
  <root>/<NN_type>/images/<NN_type>.tif            template image
  <root>/<NN_type>/images/<CLIP>/<CLIP>_<NN>.tif   frames
  <root>/<NN_type>/ground_truth/<CLIP>/<CLIP>_<NN>.json  {"quad": [[x, y] x 4]}"""

SMARTDOC_LAYOUT = """expected SmartDoc layout:
  <root>/backgroundNN/<doc>.avi                    video (or a <doc>/ directory of frames)
  <root>/backgroundNN/<doc>.gt.xml                 per-frame corner annotations (tl, tr, br, bl)"""


class DatasetLayoutError(ValueError):
    pass


class _MidvFormats(pydantic.BaseModel):
    formats: dict[str, float]
    type_keywords: dict[str, str]


def _load_midv_formats() -> _MidvFormats:
    text = resources.files("app").joinpath("data/midv500_formats.json").read_text(encoding="utf-8")
    return _MidvFormats.model_validate(from_json(text))


def geometry_tags(quad: Quad, width: int, height: int) -> list[str]:
    """Subset tags describing how much of the document lies inside the frame."""
    v = quad.array()
    inside = int(np.sum((v[:, 0] >= 0) & (v[:, 0] < width) & (v[:, 1] >= 0) & (v[:, 1] < height)))
    tags: list[str] = []
    if inside >= 3:
        tags.append("3-vertices-in-frame")
    if inside == 4:
        tags.append("4-vertices-in-frame")
    poly = Polygon([tuple(p) for p in v])
    visible = poly.intersection(box(0, 0, width, height)).area
    if poly.area > 0 and visible / poly.area >= 0.9:
        tags.append("area-in-frame-90")
    if visible <= 0:
        tags.append("out-of-frame")
    return tags


def _entry(image: Path, points: list[tuple[float, float]], aspect: float, tags: list[str], size: tuple[int, int]) -> Optional[ManifestEntry]:
    try:
        quad = Quad.from_points(points)
    except DegenerateQuad:
        logger.warning("Skipping frame with a non-convex annotation", image=str(image))
        return None
    return ManifestEntry(
        image=str(image),
        gt=[(p.x, p.y) for p in quad.vertices],
        aspect=aspect,
        tags=tags + geometry_tags(quad, *size),
    )


def _midv_type_aspect(type_dir: Path, formats: _MidvFormats) -> Optional[float]:
    template = type_dir / "images" / f"{type_dir.name}.tif"
    if template.is_file():
        try:
            width, height = image_size(template)
            return width / height
        except ImageDecodeError:
            pass
    tokens = type_dir.name.lower().split("_")
    for keyword, fmt in formats.type_keywords.items():
        if any(keyword == t or (len(keyword) > 2 and keyword in t) for t in tokens):
            return formats.formats[fmt]
    return None


def _midv500_entries(root: Path) -> Iterator[ManifestEntry]:
    type_dirs = sorted(p.parent for p in root.glob("*/ground_truth") if p.is_dir())
    if not type_dirs:
        raise DatasetLayoutError(f"No MIDV-500 document types under {root}\n{MIDV500_LAYOUT}")
    formats = _load_midv_formats()
    for type_dir in type_dirs:
        aspect = _midv_type_aspect(type_dir, formats)
        if aspect is None:
            logger.warning("Skipping document type without a known aspect ratio", type=type_dir.name)
            continue
        for gt_path in sorted((type_dir / "ground_truth").glob("*/*.json")):
            clip = gt_path.parent.name
            image = type_dir / "images" / clip / f"{gt_path.stem}.tif"
            if not image.is_file():
                logger.warning("Annotation without frame", annotation=str(gt_path))
                continue
            try:
                quad = from_json(gt_path.read_bytes())["quad"]
                size = image_size(image)
            except (ValueError, KeyError, ImageDecodeError) as e:
                logger.warning("Skipping unreadable annotation", annotation=str(gt_path), error=str(e))
                continue
            entry = _entry(
                image,
                [(float(x), float(y)) for x, y in quad],
                aspect,
                ["midv500", type_dir.name, clip],
                size,
            )
            if entry is not None:
                yield entry


def _smartdoc_frames(video: Path, frames_root: Path) -> tuple[list[Path], tuple[int, int]]:
    """Frame files in index order, extracting them from the video when needed."""
    frame_dir = video.with_suffix("")
    if frame_dir.is_dir():
        files = sorted(p for p in frame_dir.iterdir() if p.suffix.lower() in (".png", ".jpg", ".jpeg", ".tif"))
        if files:
            return files, image_size(files[0])
    out_dir = frames_root / video.parent.name / video.stem
    existing = sorted(out_dir.glob("*.png")) if out_dir.is_dir() else []
    if existing:
        return existing, image_size(existing[0])
    if not video.is_file():
        return [], (0, 0)
    out_dir.mkdir(parents=True, exist_ok=True)
    capture = cv2.VideoCapture(str(video))
    files: list[Path] = []
    try:
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            path = out_dir / f"{len(files) + 1:04d}.png"
            cv2.imwrite(str(path), frame)
            files.append(path)
    finally:
        capture.release()
    logger.info("Extracted video frames", video=str(video), frames=len(files))
    return files, image_size(files[0]) if files else (0, 0)


_CORNERS = ("tl", "tr", "br", "bl")


def _smartdoc_annotations(xml_path: Path) -> Iterator[tuple[int, list[tuple[float, float]]]]:
    tree = ET.parse(xml_path)
    for frame in tree.getroot().iter("frame"):
        if frame.get("rejected", "false").lower() == "true":
            continue
        points = {p.get("name"): (float(p.get("x", "nan")), float(p.get("y", "nan"))) for p in frame.iter("point")}
        if not all(name in points for name in _CORNERS):
            continue
        yield int(frame.get("index", "0")), [points[name] for name in _CORNERS]


def _smartdoc_entries(root: Path, frames_root: Path) -> Iterator[ManifestEntry]:
    backgrounds = sorted(p for p in root.iterdir() if p.is_dir() and re.fullmatch(r"background\d\d", p.name))
    if not backgrounds:
        raise DatasetLayoutError(f"No SmartDoc backgrounds under {root}\n{SMARTDOC_LAYOUT}")
    for background in backgrounds:
        if background.name not in SMARTDOC_BACKGROUNDS:
            logger.info("Excluding background", background=background.name)
            continue
        for xml_path in sorted(background.glob("*.xml")):
            stem = xml_path.name.split(".")[0]
            files, size = _smartdoc_frames(background / f"{stem}.avi", frames_root)
            if not files:
                logger.warning("No frames for annotation", annotation=str(xml_path))
                continue
            for index, points in _smartdoc_annotations(xml_path):
                if not 1 <= index <= len(files):
                    continue
                entry = _entry(files[index - 1], points, SMARTDOC_ASPECT, ["smartdoc", background.name, stem], size)
                if entry is not None:
                    yield entry


def adapt_dataset(root: Path, kind: DatasetKind, out: Path) -> int:
    """Write a manifest for a dataset directory, returning the number of entries."""
    if not root.is_dir():
        raise DatasetLayoutError(f"Dataset root does not exist: {root}")
    match kind:
        case DatasetKind.midv500:
            entries = list(_midv500_entries(root))
        case DatasetKind.smartdoc:
            entries = list(_smartdoc_entries(root, out.parent / "frames"))
    count = write_manifest(entries, out)
    logger.info("Wrote manifest", kind=kind.value, entries=count, path=str(out))
    return count
