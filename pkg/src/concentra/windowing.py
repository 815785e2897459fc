"""Window boundaries over timestamp-indexed streams and their materialisation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from concentra.errors import ContractError, ParameterError
from concentra.store import Repository, query_readings

MINUTE_MS = 60_000

START_INCLUSIVE = "[)"
END_INCLUSIVE = "(]"

Rate = Union[float, str]
IRREGULAR = "irregular"


@dataclass(frozen=True)
class WindowBounds:
    start: int
    end: int
    inclusion: str = START_INCLUSIVE

    def __post_init__(self):
        if not self.start < self.end:
            raise ContractError(f"window start {self.start} must precede end {self.end}")
        if self.inclusion not in (START_INCLUSIVE, END_INCLUSIVE):
            raise ContractError(f"unknown inclusion convention {self.inclusion!r}")

    @property
    def size(self) -> int:
        return self.end - self.start

    @property
    def centroid(self) -> int:
        return self.start + self.size // 2

    def contains(self, timestamps) -> np.ndarray:
        t = np.asarray(timestamps)
        if self.inclusion == START_INCLUSIVE:
            return (t >= self.start) & (t < self.end)
        return (t > self.start) & (t <= self.end)


@dataclass(frozen=True)
class SensorWindow:
    bounds: WindowBounds
    sources: tuple[str, ...]
    channel: str
    timestamps: np.ndarray
    values: np.ndarray
    expected_count: int
    coverage: float
    nominal_rate: Rate = IRREGULAR

    @property
    def count(self) -> int:
        return len(self.values)

    def passes(self, min_coverage: float = 0.5) -> bool:
        """Keep-window policy: coverage threshold for regular streams, one reading otherwise."""
        if self.count == 0:
            return False
        return self.coverage >= min_coverage


def slide_windows(t0: int, t1: int, size: int, overlap: float = 0.0) -> list[WindowBounds]:
    """Sliding windows anchored at ``t0`` over ``[t0, t1)``.

    Consecutive windows start ``size * (1 - overlap)`` ms apart (rounded to
    whole ms) and the last one is the final window that still ends at or
    before ``t1``.
    """
    if size <= 0:
        raise ParameterError("window size must be positive")
    if not 0.0 <= overlap < 1.0:
        raise ParameterError("overlap must lie in [0, 1)")
    step = round(size * (1.0 - overlap))
    if step <= 0:
        raise ParameterError(f"window step rounds to {step} ms")
    if t1 - t0 < size:
        return []
    n = (t1 - t0 - size) // step + 1
    return [WindowBounds(t0 + i * step, t0 + i * step + size) for i in range(n)]


def expected_count(bounds: WindowBounds, nominal_rate: Rate, count: int) -> int:
    if nominal_rate == IRREGULAR:
        return count
    return math.floor(float(nominal_rate) * bounds.size / 1000.0)


def make_window(bounds: WindowBounds, sources: Sequence[str], channel: str,
                timestamps: np.ndarray, values: np.ndarray, nominal_rate: Rate) -> SensorWindow:
    n = len(values)
    expected = expected_count(bounds, nominal_rate, n)
    if nominal_rate == IRREGULAR:
        coverage = 1.0 if n > 0 else 0.0
    else:
        coverage = min(n / expected, 1.0) if expected > 0 else 0.0
    return SensorWindow(bounds, tuple(sources), channel, timestamps, values, expected, coverage,
                        nominal_rate)


def materialize(repo: Repository, bounds: WindowBounds, sources: str | Sequence[str],
                channel: str, nominal_rate: Rate = IRREGULAR) -> SensorWindow:
    if isinstance(sources, str):
        sources = (sources,)
    r = query_readings(repo, sources, channel, bounds.start, bounds.end, bounds.inclusion)
    return make_window(bounds, sources, channel, r.timestamps, r.values, nominal_rate)
