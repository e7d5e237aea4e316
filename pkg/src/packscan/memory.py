"""Tracked-allocation accounting.

Every stage that touches pixel data registers its large buffers with a shared
tracker so tests (and the session report) can assert the streaming bound:
no stage may hold more than a few full-resolution slices, one subsampled
volume and one object subvolume at a time.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

DEFAULT_BUDGET = 16 * 1024**3  # bytes; smallest machine the pipeline targets


class AllocationTracker:
    """Thread-safe byte counter with a high-water mark."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.current = 0
        self.peak = 0

    def add(self, nbytes: int) -> None:
        with self._lock:
            self.current += int(nbytes)
            if self.current > self.peak:
                self.peak = self.current

    def release(self, nbytes: int) -> None:
        with self._lock:
            self.current -= int(nbytes)

    def reset(self) -> None:
        with self._lock:
            self.current = 0
            self.peak = 0

    @contextmanager
    def hold(self, nbytes: int):
        """Account for a buffer over the lifetime of a with-block."""
        self.add(nbytes)
        try:
            yield
        finally:
            self.release(nbytes)

    @contextmanager
    def hold_array(self, arr):
        with self.hold(arr.nbytes):
            yield arr


#: Process-wide tracker used by default; tests may swap in a fresh one.
tracker = AllocationTracker()
