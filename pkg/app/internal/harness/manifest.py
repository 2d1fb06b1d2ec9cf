from pathlib import Path
from typing import Iterable

import pydantic
from pydantic_core import from_json

from app.internal.models import ManifestEntry
from app.util.log import logger


class ManifestError(ValueError):
    pass


def parse_manifest(lines: Iterable[str], strict: bool = False, source: str = "<manifest>") -> list[ManifestEntry]:
    entries: list[ManifestEntry] = []
    for number, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            entries.append(ManifestEntry.model_validate(from_json(line)))
        except (ValueError, pydantic.ValidationError) as e:
            if strict:
                raise ManifestError(f"{source}:{number}: invalid entry: {e}") from e
            logger.warning("Skipping invalid manifest line", source=source, line=number, error=str(e))
    if not entries:
        raise ManifestError(f"{source} contains no valid entries")
    return entries


def load_manifest(path: Path, strict: bool = False) -> list[ManifestEntry]:
    """
    Read a JSON-lines manifest. Invalid lines are logged with their line
    number and skipped, or abort the load in strict mode.
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ManifestError(f"Cannot read manifest {path}: {e}") from e
    return parse_manifest(text.splitlines(), strict=strict, source=str(path))


def write_manifest(entries: Iterable[ManifestEntry], path: Path) -> int:
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as f:
        for entry in entries:
            f.write(entry.model_dump_json() + "\n")
            count += 1
    return count
