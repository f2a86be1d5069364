import logging
import threading
import time
from pathlib import Path
from typing import Callable, NewType, Optional

logger = logging.getLogger(__name__)
base_dir = Path(__file__).parent.parent

# Milliseconds since the unix epoch
Timestamp = NewType("Timestamp", int)

TIMESTAMP_MAX = 2**64 - 1

Clock = Callable[[], Timestamp]


class EapLabError(RuntimeError):
    """Base class for everything this package raises on purpose"""


class ProtocolViolation(EapLabError):
    """A message arrived that the receiving actor can't accept in its current phase"""


class DecodeError(EapLabError):
    """Malformed wire bytes"""


class AttackError(EapLabError):
    """The attack can't run on the given inputs (wrong variant, missing messages, ...)"""


class ConfigError(EapLabError):
    pass


class StorageError(EapLabError):
    """A file could not be parsed. Names the file and, if known, the 1-based line"""

    path: Optional[Path]
    line: Optional[int]

    def __init__(
        self, message: str, path: Optional[Path] = None, line: Optional[int] = None
    ):
        self.path = path
        self.line = line
        if path is not None and line is not None:
            message = f"{path}:{line}: {message}"
        elif path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class SystemClock:
    """Wall clock in milliseconds, clamped so that readings never go backwards"""

    def __init__(self):
        self._last = 0
        self._lock = threading.Lock()

    def __call__(self) -> Timestamp:
        with self._lock:
            now = max(self._last, time.time_ns() // 1_000_000)
            self._last = now
            return Timestamp(now)


class SimulatedClock:
    """Injectable clock for deterministic tests and experiments.

    Each reading returns the current time and then advances by `tick_millis`, so a
    non-zero tick gives strictly increasing timestamps across sessions.
    """

    def __init__(self, start_millis: int = 0, tick_millis: int = 0):
        if start_millis < 0 or tick_millis < 0:
            raise ValueError("A simulated clock can't run backwards")
        self.now = start_millis
        self.tick_millis = tick_millis
        self._lock = threading.Lock()

    def __call__(self) -> Timestamp:
        with self._lock:
            now = self.now
            self.now += self.tick_millis
            return Timestamp(now)

    def advance(self, millis: int):
        if millis < 0:
            raise ValueError(f"Can't advance the clock by {millis}ms")
        with self._lock:
            self.now += millis
