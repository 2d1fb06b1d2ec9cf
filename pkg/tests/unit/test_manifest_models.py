import math
from pathlib import Path

import pydantic
import pytest

from app.internal.harness.manifest import ManifestError, load_manifest, parse_manifest, write_manifest
from app.internal.models import CSV_HEADER, EntryResult, EvalReport, ManifestEntry, SubsetStats

GOOD = '{"image": "a.png", "gt": [[0, 0], [10, 0], [10, 10], [0, 10]], "aspect": 1.0, "tags": ["x"]}'
CLOCKWISE = '{"image": "b.png", "gt": [[0, 0], [0, 10], [10, 10], [10, 0]], "aspect": 1.5}'
NON_CONVEX = '{"image": "c.png", "gt": [[0, 0], [10, 0], [2, 2], [0, 10]], "aspect": 1.0}'
THREE_POINTS = '{"image": "d.png", "gt": [[0, 0], [10, 0], [10, 10]], "aspect": 1.0}'
BAD_ASPECT = '{"image": "e.png", "gt": [[0, 0], [10, 0], [10, 10], [0, 10]], "aspect": 0}'


class TestManifestEntry:
    def test_parse(self):
        entry = ManifestEntry.model_validate_json(GOOD)
        assert entry.image == "a.png"
        assert entry.tags == ["x"]
        assert entry.quad().area == pytest.approx(100.0)

    def test_either_orientation_is_accepted(self):
        entry = ManifestEntry.model_validate_json(CLOCKWISE)
        assert entry.quad().vertices[1] == (10.0, 0.0)

    @pytest.mark.parametrize("line", [NON_CONVEX, THREE_POINTS, BAD_ASPECT])
    def test_invalid(self, line: str):
        with pytest.raises(pydantic.ValidationError):
            ManifestEntry.model_validate_json(line)

    def test_resolve_image(self, tmp_path: Path):
        entry = ManifestEntry.model_validate_json(GOOD)
        assert entry.resolve_image(tmp_path) == tmp_path / "a.png"
        absolute = entry.model_copy(update={"image": str(tmp_path / "z.png")})
        assert absolute.resolve_image(Path("elsewhere")) == tmp_path / "z.png"


class TestParseManifest:
    def test_skips_invalid_lines(self):
        entries = parse_manifest([GOOD, "", "not json", NON_CONVEX, CLOCKWISE])
        assert [e.image for e in entries] == ["a.png", "b.png"]

    def test_strict_reports_line_number(self):
        with pytest.raises(ManifestError, match=":3:"):
            parse_manifest([GOOD, CLOCKWISE, NON_CONVEX], strict=True)

    def test_nothing_valid(self):
        with pytest.raises(ManifestError):
            parse_manifest(["", "{}"])

    def test_unreadable_file(self, tmp_path: Path):
        with pytest.raises(ManifestError):
            load_manifest(tmp_path / "missing.jsonl")

    def test_write_and_load(self, tmp_path: Path):
        entries = parse_manifest([GOOD, CLOCKWISE])
        path = tmp_path / "sub" / "manifest.jsonl"
        assert write_manifest(entries, path) == 2
        assert load_manifest(path) == entries


def _stats(count: int) -> SubsetStats:
    return SubsetStats(
        count=count,
        detected=0,
        mean_min_d=None,
        mean_iou=0.0,
        mean_iou_gt=0.0,
        mean_mean_iou=0.0,
        rate_min_d=0.0,
        rate_iou=0.0,
    )


class TestResults:
    def test_undetected_entry_serializes_infinity(self):
        result = EntryResult(index=0, image="a.png", detected=False)
        assert math.isinf(result.min_d)
        data = result.model_dump_json()
        assert '"min_d":Infinity' in data
        assert math.isinf(EntryResult.model_validate_json(data).min_d)

    def test_csv_row(self):
        result = EntryResult(index=3, image="a.png", detected=True, min_d=0.0125, iou=0.95, ms=12.5, provenance="four-line")
        row = result.csv_row()
        assert len(row) == len(CSV_HEADER)
        assert row[:4] == ["3", "a.png", "1", "0.012500"]
        assert row[-2:] == ["12.50", "four-line"]
        assert EntryResult(index=0, image="b", detected=False).csv_row()[3] == "inf"

    def test_report_counts_must_match(self):
        entry = EntryResult(index=0, image="a.png", detected=False)
        EvalReport(entries=[entry], overall=_stats(1), min_d_threshold=0.017, iou_threshold=0.9)
        with pytest.raises(pydantic.ValidationError):
            EvalReport(entries=[entry], overall=_stats(2), min_d_threshold=0.017, iou_threshold=0.9)

    def test_report_round_trip(self):
        entry = EntryResult(index=0, image="a.png", detected=False, tags=["t"])
        report = EvalReport(entries=[entry], overall=_stats(1), min_d_threshold=0.017, iou_threshold=0.9)
        restored = EvalReport.model_validate(report.model_dump())
        assert restored.overall.count == 1
        assert restored.entries[0].tags == ["t"]
        assert math.isinf(restored.entries[0].min_d)
