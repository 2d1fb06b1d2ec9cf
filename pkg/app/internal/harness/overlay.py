from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from app.internal.geometry import Quad
from app.internal.hough import detection_parts
from app.internal.imaging import RgbImage
from app.internal.pipeline import DebugArtifacts
from app.internal.env_settings import HoughSettings
from app.util.image_io import save_grayscale, save_heatmap, save_image

RESULT_COLOR = (255, 0, 0)
TRUTH_COLOR = (0, 200, 0)
_FAMILY_NAMES = {"vert+": "vert_pos", "vert-": "vert_neg", "horz+": "horz_pos", "horz-": "horz_neg"}


def _outline(draw: ImageDraw.ImageDraw, quad: Quad, color: tuple[int, int, int], width: int) -> None:
    # pixel centres sit at integer coordinates in both conventions
    points = [(float(p.x), float(p.y)) for p in quad.vertices]
    draw.line(points + points[:1], fill=color, width=width, joint="curve")


def draw_overlay(
    img: RgbImage,
    result: Optional[Quad],
    truth: Optional[Quad] = None,
    width: Optional[int] = None,
) -> RgbImage:
    """The image with the ground truth in green and the result in red on top."""
    width = width or max(2, round(min(img.width, img.height) / 160))
    canvas = Image.fromarray(img.pixels.copy())
    draw = ImageDraw.Draw(canvas)
    if truth is not None:
        _outline(draw, truth, TRUTH_COLOR, width)
    if result is not None:
        _outline(draw, result, RESULT_COLOR, width)
    return RgbImage(np.asarray(canvas))


def write_overlay(img: RgbImage, result: Optional[Quad], truth: Optional[Quad], path: Path) -> None:
    save_image(draw_overlay(img, result, truth), path)


def dump_debug(artifacts: DebugArtifacts, out_dir: Path, settings: HoughSettings = HoughSettings()) -> list[Path]:
    """
    Write the working image, both edge maps and every Hough accumulator of
    a run. Returns the written paths.
    """
    written: list[Path] = []

    def keep(path: Path) -> Path:
        written.append(path)
        return path

    winner = artifacts.winner.quad if artifacts.winner is not None else None
    write_overlay(artifacts.working.image, winner, None, keep(out_dir / "working.png"))
    maps = artifacts.edge_maps
    save_grayscale(maps.horizontal.values, keep(out_dir / "edges_horizontal.png"))
    save_grayscale(maps.vertical.values, keep(out_dir / "edges_vertical.png"))
    for orientation, bands in detection_parts(maps.horizontal, maps.vertical, settings).items():
        for band in bands:
            for hough in band:
                name = f"hough_{orientation}_band{hough.band.index}_{_FAMILY_NAMES[hough.family]}.png"
                save_heatmap(hough.accumulator, keep(out_dir / name))
    return written
