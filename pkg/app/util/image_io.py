from pathlib import Path

import cv2
import numpy as np
from numpy.typing import ArrayLike
from PIL import Image, UnidentifiedImageError

from app.internal.imaging import RgbImage


class ImageDecodeError(ValueError):
    pass


def load_image(path: Path, rotate_quarters: int = 0) -> RgbImage:
    """
    Decode any Pillow-readable file to 8-bit RGB. `rotate_quarters` rotates
    the raster counterclockwise in 90 degree steps.
    """
    try:
        with Image.open(path) as img:
            pixels = np.asarray(img.convert("RGB"))
    except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"Cannot decode image {path}: {e}") from e
    if rotate_quarters % 4:
        pixels = np.rot90(pixels, rotate_quarters % 4)
    return RgbImage(pixels)


def image_size(path: Path) -> tuple[int, int]:
    """(width, height) read from the file header."""
    try:
        with Image.open(path) as img:
            return img.size
    except (FileNotFoundError, UnidentifiedImageError, OSError) as e:
        raise ImageDecodeError(f"Cannot read image header {path}: {e}") from e


def save_image(img: RgbImage | ArrayLike, path: Path) -> None:
    pixels = img.pixels if isinstance(img, RgbImage) else np.asarray(img, dtype=np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(pixels)).save(path)


def save_grayscale(values: ArrayLike, path: Path) -> None:
    """Non-negative float raster stretched to 0..255."""
    v = np.asarray(values, dtype=np.float64)
    top = float(v.max()) if v.size else 0.0
    scaled = np.zeros(v.shape, dtype=np.uint8) if top <= 0 else np.round(255.0 * v / top).astype(np.uint8)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(scaled).save(path)


def save_heatmap(values: ArrayLike, path: Path) -> None:
    v = np.asarray(values, dtype=np.float64)
    top = float(v.max()) if v.size else 0.0
    gray = np.zeros(v.shape, dtype=np.uint8) if top <= 0 else np.round(255.0 * v / top).astype(np.uint8)
    colored = cv2.applyColorMap(gray, cv2.COLORMAP_JET)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(cv2.cvtColor(colored, cv2.COLOR_BGR2RGB)).save(path)
