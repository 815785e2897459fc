"""Instance construction: one 5-minute physical base window, the 30 minutes of
pooled floor ambient readings ending at its centroid, and the slot's
self-reported concentration as label.
"""

from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence
from zoneinfo import ZoneInfo

import numpy as np

from concentra.errors import ContractError, DataError, EmptyDatasetError
from concentra.features import (
    AMBIENT_FEATURE_CHANNELS,
    PHYSICAL_FEATURE_CHANNELS,
    FeatureVector,
    derive_channels,
    feature_names,
    read_feature_matrix,
    window_features,
    write_feature_matrix,
)
from concentra.store import (
    MAGNET_CHANNELS,
    PHYSICAL_SENSORS,
    SLOTS,
    STATION_CHANNELS,
    Repository,
)
from concentra.windowing import IRREGULAR, MINUTE_MS, WindowBounds, materialize, slide_windows

SLOT_RANGES = {
    "morning": (dt.time(8, 0), dt.time(10, 30)),
    "afternoon": (dt.time(10, 30), dt.time(15, 30)),
}
# self-reports that label each slot
REPORT_TIMES = {"morning": dt.time(10, 0), "afternoon": dt.time(15, 30)}

BASE_WINDOW_MS = 5 * MINUTE_MS
AMBIENT_SPAN_MS = 30 * MINUTE_MS
DEFAULT_PHYSICAL_RATE = 50.0

NO_SURVEY = "no-survey"
COVERAGE_FAIL_PHYSICAL = "coverage-fail-physical"
COVERAGE_FAIL_AMBIENT = "coverage-fail-ambient"
SKIP_REASONS = (NO_SURVEY, COVERAGE_FAIL_PHYSICAL, COVERAGE_FAIL_AMBIENT)

AMBIENT_NAMES = tuple(feature_names(AMBIENT_FEATURE_CHANNELS))
PHYSICAL_NAMES = tuple(feature_names(PHYSICAL_FEATURE_CHANNELS))


@dataclass(frozen=True)
class FusionParams:
    physical_rate: float = DEFAULT_PHYSICAL_RATE
    min_coverage: float = 0.5
    base_ms: int = BASE_WINDOW_MS
    ambient_span_ms: int = AMBIENT_SPAN_MS


@dataclass(frozen=True)
class LabeledInstance:
    participant_id: str
    date: dt.date
    end_timestamp: int
    ambient: FeatureVector
    physical: FeatureVector
    label: int
    slot: str
    site: str
    zone: str | None = None

    @property
    def concentration(self) -> int:
        return self.label


@dataclass(frozen=True)
class SkipRecord:
    participant_id: str
    date: dt.date
    window_start: int
    reason: str


@dataclass
class Dataset:
    site: str
    slot: str
    instances: list[LabeledInstance]
    ambient_names: tuple[str, ...] = AMBIENT_NAMES
    physical_names: tuple[str, ...] = PHYSICAL_NAMES
    skips: list[SkipRecord] = field(default_factory=list)
    timezone: str = "UTC"

    def __len__(self):
        return len(self.instances)

    @property
    def feature_names(self) -> tuple[str, ...]:
        return self.ambient_names + self.physical_names

    @property
    def labels(self) -> np.ndarray:
        return np.array([i.label for i in self.instances], dtype=np.int64)

    @property
    def participants(self) -> list[str]:
        return [i.participant_id for i in self.instances]

    def matrix(self, names: Sequence[str] | None = None) -> np.ndarray:
        """Training matrix over ``names`` (default all features); never holds participant ids."""
        names = self.feature_names if names is None else tuple(names)
        if not self.instances:
            return np.empty((0, len(names)))
        rows = []
        for inst in self.instances:
            merged = {**inst.ambient.features, **inst.physical.features}
            rows.append([merged[n] for n in names])
        return np.array(rows, dtype=np.float64)

    def schema_hash(self) -> str:
        return schema_hash(self.feature_names)


def schema_hash(names: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(names).encode()).hexdigest()[:16]


def local_datetime_ms(date: dt.date, time: dt.time, timezone: str) -> int:
    local = dt.datetime.combine(date, time, tzinfo=ZoneInfo(timezone))
    return int(round(local.timestamp() * 1000))


def base_windows(date: dt.date, slot: str, timezone: str = "UTC",
                 size_ms: int = BASE_WINDOW_MS) -> list[WindowBounds]:
    """Non-overlapping base windows tiling the slot's local-time range."""
    if slot not in SLOT_RANGES:
        raise ContractError(f"slot must be one of {SLOTS}, got {slot!r}")
    start, end = SLOT_RANGES[slot]
    t0 = local_datetime_ms(date, start, timezone)
    t1 = local_datetime_ms(date, end, timezone)
    return slide_windows(t0, t1, size_ms, 0.0)


def ambient_bounds_for(base: WindowBounds, span_ms: int = AMBIENT_SPAN_MS) -> WindowBounds:
    """The ambient span ``(centroid - span, centroid]`` for a base window."""
    centroid = base.start + base.size // 2
    return WindowBounds(centroid - span_ms, centroid, "(]")


def _physical_windows(repo: Repository, participant: str, base: WindowBounds, rate: float):
    windows = {}
    for sensor, channels in PHYSICAL_SENSORS.items():
        for ch in channels:
            windows[ch] = materialize(repo, base, participant, ch,
                                      IRREGULAR if sensor == "pedometer" else rate)
    return derive_channels(windows)


def _ambient_windows(repo: Repository, participant: str, base: WindowBounds,
                     stations: Sequence[str], span_ms: int):
    span = ambient_bounds_for(base, span_ms)
    windows = {ch: materialize(repo, span, stations, ch) for ch in STATION_CHANNELS}
    # the phone magnetometer is windowed on the base grid
    magnet = derive_channels({ch: materialize(repo, base, participant, ch) for ch in MAGNET_CHANNELS})
    windows["magnet_mag"] = magnet["magnet_mag"]
    return windows, span.end


def default_params(repo: Repository) -> FusionParams:
    """Default policy, with the nominal physical rate taken from site metadata when declared."""
    return FusionParams(physical_rate=repo.site.physical_rate or DEFAULT_PHYSICAL_RATE)


def build_instance(repo: Repository, participant: str, date: dt.date, base: WindowBounds,
                   slot: str, site: str | None = None,
                   params: FusionParams | None = None) -> LabeledInstance | str:
    """A labeled instance, or the skip reason if one cannot be formed."""
    params = params or default_params(repo)
    report = repo.survey(participant, date, slot)
    if report is None:
        return NO_SURVEY
    phys = _physical_windows(repo, participant, base, params.physical_rate)
    if not all(phys[ch].passes(params.min_coverage) for ch in PHYSICAL_FEATURE_CHANNELS):
        return COVERAGE_FAIL_PHYSICAL
    stations = repo.site.stations_for(participant)
    amb, centroid = _ambient_windows(repo, participant, base, stations, params.ambient_span_ms)
    if not all(amb[ch].passes(params.min_coverage) for ch in AMBIENT_FEATURE_CHANNELS):
        return COVERAGE_FAIL_AMBIENT
    return LabeledInstance(
        participant_id=participant,
        date=date,
        end_timestamp=base.end,
        ambient=window_features(amb, "ambient", AMBIENT_FEATURE_CHANNELS, centroid, params.min_coverage),
        physical=window_features(phys, "physical", PHYSICAL_FEATURE_CHANNELS, base.end,
                                 params.min_coverage),
        label=report.concentration,
        slot=slot,
        site=site or repo.site.site_id,
        zone=report.zone,
    )


def _participant_day(repo, participant, date, slot, site, params):
    instances, skips = [], []
    for base in base_windows(date, slot, repo.site.timezone, params.base_ms):
        out = build_instance(repo, participant, date, base, slot, site, params)
        if isinstance(out, str):
            skips.append(SkipRecord(participant, date, base.start, out))
        else:
            instances.append(out)
    return instances, skips


def build_dataset(repo: Repository, slot: str, site: str | None = None,
                  params: FusionParams | None = None, jobs: int = 1) -> Dataset:
    """All participants x survey dates x base windows of one slot.

    Skipped base windows are kept on ``Dataset.skips``. Instances are ordered
    by (participant, timestamp) regardless of ``jobs``.
    """
    params = params or default_params(repo)
    site = site or repo.site.site_id
    pairs = [(p, d) for p in repo.participants() for d in repo.survey_dates()]
    work = lambda pd_: _participant_day(repo, pd_[0], pd_[1], slot, site, params)  # noqa: E731
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(work, pairs))
    else:
        results = [work(pair) for pair in pairs]
    instances = [i for res, _ in results for i in res]
    skips = [s for _, res in results for s in res]
    if not instances:
        raise EmptyDatasetError(
            f"no instances for site {site!r}, slot {slot!r} "
            f"({len(skips)} base windows skipped)")
    instances.sort(key=lambda i: (i.participant_id, i.end_timestamp))
    return Dataset(site, slot, instances, skips=skips, timezone=repo.site.timezone)


# -- export / import -----------------------------------------------------

def dataset_paths(out_dir: str | Path, site: str, slot: str) -> dict[str, Path]:
    out_dir = Path(out_dir)
    stem = f"{site}_{slot}"
    return {
        "dataset": out_dir / f"{stem}_dataset.csv",
        "manifest": out_dir / f"{stem}_manifest.json",
        "audit": out_dir / f"{stem}_skips.csv",
    }


def write_dataset(dataset: Dataset, out_dir: str | Path) -> dict[str, Path]:
    paths = dataset_paths(out_dir, dataset.site, dataset.slot)
    paths["dataset"].parent.mkdir(parents=True, exist_ok=True)
    names = dataset.feature_names
    X = dataset.matrix()
    write_feature_matrix(
        paths["dataset"],
        ((i.participant_id, i.end_timestamp, i.label, row) for i, row in zip(dataset.instances, X)),
        names,
    )
    manifest = {
        "site": dataset.site,
        "slot": dataset.slot,
        "ambient_features": list(dataset.ambient_names),
        "physical_features": list(dataset.physical_names),
        "schema_hash": dataset.schema_hash(),
        "n_instances": len(dataset),
        "timezone": dataset.timezone,
        "zones": [i.zone or "" for i in dataset.instances],
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    write_skip_audit(dataset.skips, paths["audit"])
    return paths


def write_skip_audit(skips: Sequence[SkipRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["participant_id", "date", "window_start_ms", "reason"])
        for s in skips:
            writer.writerow([s.participant_id, str(s.date), s.window_start, s.reason])


def read_dataset(path: str | Path, manifest_path: str | Path | None = None) -> Dataset:
    """Inverse of :func:`write_dataset`; the manifest defaults to the sibling ``_manifest.json``."""
    path = Path(path)
    if manifest_path is None:
        manifest_path = path.with_name(path.name.replace("_dataset.csv", "_manifest.json"))
    try:
        manifest = json.loads(Path(manifest_path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read dataset manifest {manifest_path}: {exc}") from exc
    names, pids, ends, labels, X = read_feature_matrix(path)
    amb = tuple(manifest["ambient_features"])
    phys = tuple(manifest["physical_features"])
    if tuple(names) != amb + phys or schema_hash(names) != manifest["schema_hash"]:
        raise DataError(f"{path}: columns do not match manifest {manifest_path}")
    zones = manifest.get("zones") or [""] * len(pids)
    tz = ZoneInfo(manifest.get("timezone", "UTC"))
    instances = []
    n_amb = len(amb)
    for k, (pid, end, label) in enumerate(zip(pids, ends, labels)):
        row = X[k]
        base_start = int(end) - BASE_WINDOW_MS
        instances.append(LabeledInstance(
            participant_id=pid,
            date=dt.datetime.fromtimestamp(base_start / 1000, tz).date(),
            end_timestamp=int(end),
            ambient=FeatureVector("ambient", base_start + BASE_WINDOW_MS // 2,
                                  dict(zip(amb, row[:n_amb].tolist()))),
            physical=FeatureVector("physical", int(end), dict(zip(phys, row[n_amb:].tolist()))),
            label=int(label),
            slot=manifest["slot"],
            site=manifest["site"],
            zone=zones[k] or None,
        ))
    return Dataset(manifest["site"], manifest["slot"], instances, amb, phys,
                   timezone=manifest.get("timezone", "UTC"))
