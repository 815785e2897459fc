"""Per-window statistical features and feature-vector assembly."""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from concentra.errors import ContractError, DataError
from concentra.windowing import SensorWindow, make_window

STAT_NAMES = ("mean", "median", "std", "max", "min", "iqr", "rms")

AMBIENT_FEATURE_CHANNELS = ("temperature", "humidity", "pressure", "noise", "co2", "magnet_mag")
PHYSICAL_FEATURE_CHANNELS = (
    "accel_x", "accel_y", "accel_z", "accel_mag",
    "gyro_x", "gyro_y", "gyro_z", "gyro_mag",
    "pedometer",
)
PEDOMETER_FEATURE = "pedometer_steps"

_AMBIENT_OK = frozenset(AMBIENT_FEATURE_CHANNELS + ("magnet_x", "magnet_y", "magnet_z"))
_PHYSICAL_OK = frozenset(PHYSICAL_FEATURE_CHANNELS)

_MAGNITUDES = {
    "accel_mag": ("accel_x", "accel_y", "accel_z"),
    "gyro_mag": ("gyro_x", "gyro_y", "gyro_z"),
    "magnet_mag": ("magnet_x", "magnet_y", "magnet_z"),
}


@dataclass(frozen=True)
class StatVector:
    mean: float
    median: float
    std: float
    max: float
    min: float
    iqr: float
    rms: float

    def as_dict(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def quantiles(values, qs) -> np.ndarray:
    """Quantiles with linear interpolation at position q*(n-1) of the sorted data."""
    return np.quantile(np.asarray(values, dtype=np.float64), qs, method="linear")


def extract_stats(values) -> StatVector:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise ContractError("extract_stats needs a non-empty 1-D sequence")
    if not np.isfinite(v).all():
        raise ContractError("extract_stats needs finite values")
    q1, med, q3 = quantiles(v, (0.25, 0.5, 0.75))
    mean = v.mean()
    return StatVector(
        mean=float(mean),
        median=float(med),
        std=float(np.sqrt(np.mean((v - mean) ** 2))),
        max=float(v.max()),
        min=float(v.min()),
        iqr=float(q3 - q1),
        rms=float(np.sqrt(np.mean(v * v))),
    )


@dataclass(frozen=True)
class FeatureVector:
    kind: str
    end_timestamp: int
    features: dict[str, float]

    def __post_init__(self):
        if self.kind not in ("ambient", "physical"):
            raise ContractError(f"unknown feature kind {self.kind!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(self.features)

    def values(self, names: Sequence[str] | None = None) -> np.ndarray:
        if names is None:
            return np.fromiter(self.features.values(), dtype=np.float64, count=len(self.features))
        try:
            return np.array([self.features[n] for n in names], dtype=np.float64)
        except KeyError as exc:
            raise ContractError(f"feature {exc.args[0]!r} missing from vector") from None


def _aligned(windows: Mapping[str, SensorWindow], axes: Sequence[str]):
    ws = [windows[a] for a in axes]
    t0 = ws[0].timestamps
    if all(len(w.timestamps) == len(t0) and np.array_equal(w.timestamps, t0) for w in ws[1:]):
        return t0, [w.values for w in ws]
    common = t0
    for w in ws[1:]:
        common = np.intersect1d(common, w.timestamps, assume_unique=True)
    return common, [w.values[np.searchsorted(w.timestamps, common)] for w in ws]


def derive_channels(windows: Mapping[str, SensorWindow]) -> dict[str, SensorWindow]:
    """Add magnitude channels and turn the cumulative pedometer into a step delta.

    All windows must share one set of bounds. Magnitudes use only timestamps
    where all three axes are present. The pedometer window is replaced by a
    single value ``last - first``.
    """
    bounds = {w.bounds for w in windows.values()}
    if len(bounds) > 1:
        raise ContractError("derive_channels needs windows with identical bounds")
    out = dict(windows)
    for mag, axes in _MAGNITUDES.items():
        if not all(a in windows for a in axes):
            continue
        t, (x, y, z) = _aligned(windows, axes)
        ref = windows[axes[0]]
        out[mag] = make_window(ref.bounds, ref.sources, mag, t, np.sqrt(x * x + y * y + z * z),
                               ref.nominal_rate)
    if "pedometer" in windows:
        ped = windows["pedometer"]
        if ped.count:
            delta = np.array([ped.values[-1] - ped.values[0]])
            t = ped.timestamps[-1:]
        else:
            delta, t = ped.values, ped.timestamps
        out["pedometer"] = SensorWindow(ped.bounds, ped.sources, "pedometer", t, delta,
                                        ped.expected_count, ped.coverage, ped.nominal_rate)
    return out


def feature_names(channels: Iterable[str]) -> list[str]:
    names = []
    for ch in channels:
        if ch == "pedometer":
            names.append(PEDOMETER_FEATURE)
        else:
            names.extend(f"{ch}_{s}" for s in STAT_NAMES)
    return names


def window_features(windows: Mapping[str, SensorWindow], kind: str,
                    channels: Sequence[str] | None = None, end_timestamp: int | None = None,
                    min_coverage: float = 0.5) -> FeatureVector:
    """Seven statistics per retained channel (a single step delta for the pedometer).

    ``channels`` fixes which channels (and in what order) enter the vector;
    by default the kind's canonical channel list restricted to what is
    present. Channels failing the coverage policy are dropped.
    """
    allowed = _AMBIENT_OK if kind == "ambient" else _PHYSICAL_OK
    if channels is None:
        default = AMBIENT_FEATURE_CHANNELS if kind == "ambient" else PHYSICAL_FEATURE_CHANNELS
        channels = [c for c in default if c in windows]
    stray = [c for c in channels if c not in allowed]
    if stray:
        raise ContractError(f"{kind} vector cannot hold channels {stray}")
    features: dict[str, float] = {}
    ends = set()
    for ch in channels:
        w = windows.get(ch)
        if w is None or not w.passes(min_coverage):
            continue
        ends.add(w.bounds.end)
        if ch == "pedometer":
            features[PEDOMETER_FEATURE] = float(w.values[-1])
            continue
        for stat, value in zip(STAT_NAMES, astuple(extract_stats(w.values))):
            features[f"{ch}_{stat}"] = value
    if not features:
        raise DataError(f"every {kind} channel failed the coverage policy")
    if end_timestamp is None:
        if len(ends) != 1:
            raise ContractError("windows disagree on the end timestamp; pass end_timestamp")
        end_timestamp = ends.pop()
    return FeatureVector(kind, int(end_timestamp), features)


def write_feature_matrix(path: str | Path, rows: Iterable[tuple[str, int, int, Sequence[float]]],
                         names: Sequence[str]) -> None:
    """CSV ``participant_id,end_timestamp_ms,label,<names...>``; floats use repr for exact round trips."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "end_timestamp_ms", "label", *names])
        for pid, end, label, values in rows:
            writer.writerow([pid, int(end), int(label), *(repr(float(v)) for v in values)])


def read_feature_matrix(path: str | Path):
    """Returns (names, participant ids, end timestamps, labels, matrix)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
    except (OSError, StopIteration) as exc:
        raise DataError(f"cannot read feature matrix {path}: {exc}") from exc
    if header[:3] != ["participant_id", "end_timestamp_ms", "label"]:
        raise DataError(f"{path}: not a feature matrix (bad header)")
    names = header[3:]
    pids = [r[0] for r in rows]
    ends = np.array([int(r[1]) for r in rows], dtype=np.int64)
    labels = np.array([int(r[2]) for r in rows], dtype=np.int64)
    X = np.array([[float(x) for x in r[3:]] for r in rows], dtype=np.float64).reshape(len(rows), len(names))
    if not np.isfinite(X).all():
        raise DataError(f"{path}: non-finite feature values")
    return names, pids, ends, labels, X
