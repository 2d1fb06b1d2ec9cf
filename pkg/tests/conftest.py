import sys
from pathlib import Path
from typing import Callable, Sequence

import cv2
import numpy as np
import pytest

# Ensure project root is on sys.path so `app` can be imported without editable install
ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.internal.env_settings import PipelineConfig
from app.internal.geometry import CameraIntrinsics, Quad
from app.internal.harness.synthetic import SceneSpec, synthesize_scene
from app.internal.imaging import RgbImage
from app.internal.metrics import GroundTruth

ProjectRectangle = Callable[..., np.ndarray]
RectangleImage = Callable[..., RgbImage]


@pytest.fixture
def cfg() -> PipelineConfig:
    # constructor arguments win over any stray .env in the working directory
    return PipelineConfig(working_short=240, focal_coeff=0.705, log_level="INFO")


@pytest.fixture
def camera() -> CameraIntrinsics:
    """Pipeline intrinsics of a 240x320 working image."""
    return CameraIntrinsics.for_image(240, 320, 0.705)


def _project_rectangle(
    cam: CameraIntrinsics,
    aspect: float,
    rotvec: Sequence[float] = (0.0, 0.0, 0.0),
    depth: float = 3.0,
    offset: tuple[float, float] = (0.0, 0.0),
    shear_deg: float = 0.0,
) -> np.ndarray:
    """
    Corners (top-left, top-right, bottom-right, bottom-left) of a posed aspect x 1
    rectangle. A shear leans the vertical sides, turning it into a parallelogram
    with corner angles of 90 -/+ shear_deg.
    """
    rotation, _ = cv2.Rodrigues(np.asarray(rotvec, dtype=np.float64).reshape(3, 1))
    half_w, half_h = aspect / 2.0, 0.5
    lean = half_h * np.tan(np.radians(shear_deg))
    plane = np.array(
        [
            [-half_w - lean, -half_h, 0.0],
            [half_w - lean, -half_h, 0.0],
            [half_w + lean, half_h, 0.0],
            [-half_w + lean, half_h, 0.0],
        ]
    )
    points = plane @ rotation.T + np.array([offset[0], offset[1], depth])
    return cam.project(points)


@pytest.fixture
def project_rectangle() -> ProjectRectangle:
    return _project_rectangle


def _rectangle_image(
    width: int = 240,
    height: int = 320,
    box: tuple[int, int, int, int] = (60, 80, 180, 240),
    inside: int = 30,
    outside: int = 220,
) -> RgbImage:
    """Uniform rectangle covering columns x0..x1-1 and rows y0..y1-1."""
    x0, y0, x1, y1 = box
    pixels = np.full((height, width, 3), outside, dtype=np.uint8)
    pixels[y0:y1, x0:x1] = inside
    return RgbImage(pixels)


@pytest.fixture
def rectangle_image() -> RectangleImage:
    return _rectangle_image


@pytest.fixture
def rectangle_truth() -> Quad:
    """Pixel boundary of the default rectangle in pixel-centre coordinates."""
    return Quad.from_points([(59.5, 79.5), (179.5, 79.5), (179.5, 239.5), (59.5, 239.5)])


@pytest.fixture(scope="session")
def clean_scene() -> tuple[RgbImage, GroundTruth]:
    return synthesize_scene(SceneSpec(seed=11, max_rotation_deg=25.0))


@pytest.fixture(scope="session")
def occluded_scene() -> tuple[RgbImage, GroundTruth, SceneSpec]:
    spec = SceneSpec(seed=12, max_rotation_deg=25.0, occluded_side=0)
    img, truth = synthesize_scene(spec)
    return img, truth, spec
