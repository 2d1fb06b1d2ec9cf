import time
from contextlib import contextmanager
from typing import Iterator, NewType

Millisecond = NewType("Millisecond", float)


class StageTimer:
    """Collects wall time per named pipeline stage."""

    def __init__(self):
        self.timings: dict[str, Millisecond] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            elapsed = (time.perf_counter() - start) * 1000.0
            self.timings[name] = Millisecond(self.timings.get(name, 0.0) + elapsed)

    @property
    def total(self) -> Millisecond:
        return Millisecond(sum(self.timings.values()))
