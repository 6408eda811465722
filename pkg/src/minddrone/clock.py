"""Injectable time sources.

Everything that paces a stream or expires a token takes a Clock so tests
can run accelerated or fully virtual time.
"""

from __future__ import annotations

import threading
import time
from typing import Protocol


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class RealClock:
    """Wall time (monotonic)."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class ScaledClock:
    """Runs `rate` times faster than wall time. rate=10 turns a 60 s
    scenario into 6 s of real waiting."""

    def __init__(self, rate: float) -> None:
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = float(rate)
        self._origin = time.monotonic()

    def now(self) -> float:
        return (time.monotonic() - self._origin) * self.rate

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds / self.rate)


class ManualClock:
    """Virtual time: sleep() returns immediately after advancing now().

    Thread-safe so a pump thread and a test can share one instance.
    """

    def __init__(self, start: float = 0.0) -> None:
        self._t = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._t

    def sleep(self, seconds: float) -> None:
        if seconds < 0:
            return
        with self._lock:
            self._t += seconds

    def advance(self, seconds: float) -> None:
        self.sleep(seconds)
