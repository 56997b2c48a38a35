"""Wall-clock stage accounting for overhead profiling."""

from __future__ import annotations

import time
from contextlib import contextmanager
from typing import Dict, Iterator, Optional


class StageTimer:
    """Accumulates seconds per named stage."""

    def __init__(self):
        self.seconds: Dict[str, float] = {}

    @contextmanager
    def stage(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + (time.perf_counter() - start)

    def snapshot(self) -> Dict[str, float]:
        return dict(self.seconds)


@contextmanager
def maybe_stage(timer: Optional[StageTimer], name: str) -> Iterator[None]:
    if timer is None:
        yield
    else:
        with timer.stage(name):
            yield
