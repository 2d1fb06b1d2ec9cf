import time
from pathlib import Path

import numpy as np
import pydantic
import pytest
from PIL import Image

from app.internal.env_settings import PipelineConfig, load_config
from app.internal.imaging import RgbImage
from app.util.image_io import ImageDecodeError, image_size, load_image, save_grayscale, save_image
from app.util.log import configure_logging
from app.util.time import StageTimer


class TestPipelineConfig:
    def test_defaults(self):
        cfg = PipelineConfig(_env_file=None)  # pyright: ignore[reportCallIssue]
        assert cfg.working_short == 240
        assert cfg.focal_coeff == pytest.approx(0.705)
        assert cfg.hough.peaks_per_part == 15
        assert cfg.candidates.k == 4
        assert cfg.contrast.combine_coeff == pytest.approx(0.011)
        assert cfg.refine.enabled

    def test_nested_env_override(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("DOCLOC_HOUGH__PEAKS_PER_PART", "7")
        monkeypatch.setenv("DOCLOC_WORKING_SHORT", "200")
        cfg = PipelineConfig(_env_file=None)  # pyright: ignore[reportCallIssue]
        assert cfg.hough.peaks_per_part == 7
        # untouched siblings keep their defaults
        assert cfg.hough.bands == 3
        assert cfg.working_short == 200

    def test_invalid_value(self, monkeypatch: pytest.MonkeyPatch):
        monkeypatch.setenv("DOCLOC_CANDIDATES__K", "0")
        with pytest.raises(pydantic.ValidationError):
            PipelineConfig(_env_file=None)  # pyright: ignore[reportCallIssue]

    def test_load_from_file(self, tmp_path: Path):
        path = tmp_path / "docloc.env"
        path.write_text("DOCLOC_REFINE__ENABLED=false\nDOCLOC_CONTRAST__NORM_HEIGHT=32\n")
        cfg = load_config(path)
        assert not cfg.refine.enabled
        assert cfg.contrast.norm_height == 32

    def test_missing_file(self, tmp_path: Path):
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "nope.env")


def test_configure_logging():
    configure_logging("debug")
    configure_logging("INFO")
    with pytest.raises(ValueError):
        configure_logging("chatty")


def test_stage_timer_accumulates():
    timer = StageTimer()
    with timer.stage("edges"):
        time.sleep(0.002)
    with timer.stage("edges"):
        pass
    with timer.stage("hough"):
        pass
    assert set(timer.timings) == {"edges", "hough"}
    assert timer.timings["edges"] >= 2.0
    assert timer.total == pytest.approx(sum(timer.timings.values()))


def test_stage_timer_records_failed_stage():
    timer = StageTimer()
    with pytest.raises(RuntimeError):
        with timer.stage("broken"):
            raise RuntimeError("boom")
    assert "broken" in timer.timings


class TestImageIO:
    def test_round_trip(self, tmp_path: Path):
        pixels = (np.arange(12 * 10 * 3) % 256).astype(np.uint8).reshape(12, 10, 3)
        path = tmp_path / "out" / "img.png"
        save_image(RgbImage(pixels), path)
        assert image_size(path) == (10, 12)
        assert np.array_equal(load_image(path).pixels, pixels)

    def test_grayscale_and_palette_inputs_become_rgb(self, tmp_path: Path):
        path = tmp_path / "gray.png"
        Image.new("L", (9, 8), 77).save(path)
        img = load_image(path)
        assert img.pixels.shape == (8, 9, 3)
        assert np.all(img.pixels == 77)

    def test_rotation(self, tmp_path: Path):
        pixels = np.zeros((10, 16, 3), dtype=np.uint8)
        pixels[0, -1] = 255
        path = tmp_path / "r.png"
        save_image(pixels, path)
        rotated = load_image(path, rotate_quarters=1)
        assert (rotated.width, rotated.height) == (10, 16)
        # counterclockwise: the top-right pixel lands at the top-left
        assert rotated.pixels[0, 0, 0] == 255

    def test_decode_errors(self, tmp_path: Path):
        junk = tmp_path / "junk.png"
        junk.write_bytes(b"not an image")
        with pytest.raises(ImageDecodeError):
            load_image(junk)
        with pytest.raises(ImageDecodeError):
            load_image(tmp_path / "missing.png")
        with pytest.raises(ImageDecodeError):
            image_size(junk)

    def test_save_grayscale_stretches(self, tmp_path: Path):
        path = tmp_path / "edges.png"
        save_grayscale(np.array([[0.0, 0.5], [1.0, 2.0]]), path)
        with Image.open(path) as img:
            assert np.asarray(img).tolist() == [[0, 64], [128, 255]]

    def test_save_grayscale_all_zero(self, tmp_path: Path):
        path = tmp_path / "zero.png"
        save_grayscale(np.zeros((3, 4)), path)
        with Image.open(path) as img:
            assert not np.asarray(img).any()
