"""Sensing pool: ingestion of ambient, physical and survey files into a
time-indexed repository.

Timestamps are integer epoch milliseconds (UTC). Every stream is keyed by
``(source_id, channel)`` and kept sorted by timestamp with at most one value
per timestamp (last write wins).
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import threading
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import pandas as pd

from concentra.errors import ContractError, IngestError, RangeError

AMBIENT_CHANNELS = (
    "temperature", "humidity", "pressure", "noise", "co2",
    "magnet_x", "magnet_y", "magnet_z",
)
STATION_CHANNELS = ("temperature", "humidity", "pressure", "noise", "co2")
MAGNET_CHANNELS = ("magnet_x", "magnet_y", "magnet_z")
PHYSICAL_SENSORS = {
    "accel": ("accel_x", "accel_y", "accel_z"),
    "gyro": ("gyro_x", "gyro_y", "gyro_z"),
    "pedometer": ("pedometer",),
}
PHYSICAL_CHANNELS = tuple(ch for chans in PHYSICAL_SENSORS.values() for ch in chans)
CHANNELS = frozenset(AMBIENT_CHANNELS + PHYSICAL_CHANNELS)

SLOTS = ("morning", "afternoon")
LIKERT = range(1, 6)

AMBIENT_HEADER = ("source_id", "timestamp_ms", "channel", "value")
PHYSICAL_HEADER = ("participant_id", "timestamp_ms", "sensor", "x", "y", "z")
SURVEY_HEADER = (
    "participant_id", "date", "slot", "concentration", "stress",
    "thermal_comfort", "sleep_quality", "n_formal_meetings",
    "n_informal_meetings", "n_projects", "preferred_seat", "zone",
)


@dataclass(frozen=True)
class SensorReading:
    source_id: str
    channel: str
    timestamp: int
    value: float

    def __post_init__(self):
        if self.channel not in CHANNELS:
            raise ContractError(f"unknown channel {self.channel!r}")
        if self.timestamp < 0:
            raise ContractError("timestamp must be >= 0")
        if not math.isfinite(self.value):
            raise ContractError("reading value must be finite")


@dataclass(frozen=True)
class SurveyReport:
    participant_id: str
    date: dt.date
    slot: str
    concentration: int
    stress: int | None = None
    thermal_comfort: int | None = None
    sleep_quality: int | None = None
    n_formal_meetings: int | None = None
    n_informal_meetings: int | None = None
    n_projects: int | None = None
    preferred_seat: bool | None = None
    zone: str | None = None

    def __post_init__(self):
        if self.slot not in SLOTS:
            raise ContractError(f"slot must be one of {SLOTS}, got {self.slot!r}")
        for name in ("concentration", "stress", "thermal_comfort", "sleep_quality"):
            v = getattr(self, name)
            if (v is not None or name == "concentration") and v not in LIKERT:
                raise ContractError(f"{name} must be a Likert value 1-5, got {v!r}")
        for name in ("n_formal_meetings", "n_informal_meetings", "n_projects"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ContractError(f"{name} must be >= 0")

    @property
    def key(self) -> tuple[str, dt.date, str]:
        return (self.participant_id, self.date, self.slot)


@dataclass
class IngestSummary:
    """Outcome of one file ingest.

    ``accepted`` counts input rows, ``per_channel`` counts the readings those
    rows expanded into. ``net_new`` is the number of readings (or reports)
    that were not already present in the repository.
    """

    accepted: int = 0
    rejected: int = 0
    per_channel: dict[str, int] = field(default_factory=dict)
    duplicates: int = 0
    net_new: int = 0
    replacements: int = 0


@dataclass
class SiteMetadata:
    site_id: str = "site"
    timezone: str = "UTC"
    floors: dict[str, tuple[str, ...]] = field(default_factory=dict)
    zones: tuple[str, ...] = ()
    participant_floors: dict[str, str] = field(default_factory=dict)
    physical_rate: float | None = None

    @classmethod
    def parse(cls, text: str) -> "SiteMetadata":
        meta = cls()
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise IngestError(f"site metadata line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key == "site_id":
                meta.site_id = value
            elif key == "timezone":
                meta.timezone = value
            elif key == "zones":
                meta.zones = _split_list(value)
            elif key == "physical_rate":
                meta.physical_rate = float(value)
            elif key.startswith("floor."):
                meta.floors[key[len("floor."):]] = _split_list(value)
            elif key.startswith("participant_floor."):
                meta.participant_floors[key[len("participant_floor."):]] = value
            else:
                raise IngestError(f"site metadata line {lineno}: unknown key {key!r}")
        return meta

    @classmethod
    def read(cls, path: str | Path) -> "SiteMetadata":
        try:
            return cls.parse(Path(path).read_text())
        except OSError as exc:
            raise IngestError(f"cannot read site metadata {path}: {exc}") from exc

    def dumps(self) -> str:
        lines = [f"site_id = {self.site_id}", f"timezone = {self.timezone}"]
        if self.physical_rate is not None:
            lines.append(f"physical_rate = {self.physical_rate:g}")
        if self.zones:
            lines.append("zones = " + ",".join(self.zones))
        for floor, stations in self.floors.items():
            lines.append(f"floor.{floor} = " + ",".join(stations))
        for pid, floor in sorted(self.participant_floors.items()):
            lines.append(f"participant_floor.{pid} = {floor}")
        return "\n".join(lines) + "\n"

    def stations_for(self, participant_id: str | None = None) -> tuple[str, ...]:
        """Stations pooled for a participant: their floor if mapped, else the whole site."""
        floor = self.participant_floors.get(participant_id) if participant_id else None
        if floor is not None:
            return self.floors[floor]
        return tuple(sorted({s for stations in self.floors.values() for s in stations}))


def _split_list(value: str) -> tuple[str, ...]:
    return tuple(s.strip() for s in value.split(",") if s.strip())


@dataclass(frozen=True)
class Readings:
    timestamps: np.ndarray
    values: np.ndarray

    def __len__(self):
        return len(self.timestamps)


_EMPTY_T = np.empty(0, dtype=np.int64)
_EMPTY_V = np.empty(0, dtype=np.float64)


class Repository:
    """In-memory sensing pool.

    Stream arrays are replaced, never mutated, so readers holding a reference
    see a consistent snapshot while an ingest runs. Writers serialise on a lock.
    """

    def __init__(self, site: SiteMetadata | None = None):
        self.site = site or SiteMetadata()
        self._streams: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
        self._surveys: dict[tuple[str, dt.date, str], SurveyReport] = {}
        self._lock = threading.Lock()

    # -- writes ---------------------------------------------------------
    def insert(self, source_id: str, channel: str, timestamps, values) -> tuple[int, int]:
        """Merge readings into one stream; returns (net_new, duplicates_dropped)."""
        if channel not in CHANNELS:
            raise ContractError(f"unknown channel {channel!r}")
        ts = np.asarray(timestamps, dtype=np.int64)
        vs = np.asarray(values, dtype=np.float64)
        if ts.shape != vs.shape or ts.ndim != 1:
            raise ContractError("timestamps and values must be equal-length 1-D sequences")
        if len(ts) and (ts.min() < 0 or not np.isfinite(vs).all()):
            raise ContractError("readings need timestamps >= 0 and finite values")
        with self._lock:
            old_t, old_v = self._streams.get((source_id, channel), (_EMPTY_T, _EMPTY_V))
            if len(old_t) == 0 and len(ts) and np.all(ts[1:] > ts[:-1]):
                merged_t, merged_v = ts, vs
            else:
                all_t = np.concatenate([old_t, ts])
                all_v = np.concatenate([old_v, vs])
                order = np.argsort(all_t, kind="stable")
                all_t, all_v = all_t[order], all_v[order]
                # stable sort keeps arrival order inside equal timestamps: keep the last
                keep = np.ones(len(all_t), dtype=bool)
                keep[:-1] = all_t[1:] != all_t[:-1]
                merged_t, merged_v = all_t[keep], all_v[keep]
            self._streams[(source_id, channel)] = (merged_t, merged_v)
        net_new = len(merged_t) - len(old_t)
        return net_new, len(ts) - net_new

    def add_survey(self, report: SurveyReport) -> bool:
        """Store a report; returns True if it replaced an existing one."""
        with self._lock:
            replaced = report.key in self._surveys
            self._surveys[report.key] = report
        return replaced

    # -- reads ----------------------------------------------------------
    def stream(self, source_id: str, channel: str) -> Readings:
        t, v = self._streams.get((source_id, channel), (_EMPTY_T, _EMPTY_V))
        return Readings(t, v)

    def stream_keys(self) -> list[tuple[str, str]]:
        return sorted(self._streams)

    def sources(self, channels: Iterable[str] | None = None) -> list[str]:
        wanted = set(channels) if channels is not None else None
        return sorted({s for s, ch in self._streams if wanted is None or ch in wanted})

    def participants(self) -> list[str]:
        """Participants seen either through device streams or surveys."""
        ids = set(self.sources(PHYSICAL_CHANNELS))
        ids.update(pid for pid, _, _ in self._surveys)
        return sorted(ids)

    def survey(self, participant_id: str, date: dt.date, slot: str) -> SurveyReport | None:
        return self._surveys.get((participant_id, date, slot))

    def surveys(self) -> list[SurveyReport]:
        return [self._surveys[k] for k in sorted(self._surveys)]

    def survey_dates(self) -> list[dt.date]:
        return sorted({d for _, d, _ in self._surveys})

    def n_readings(self) -> int:
        return sum(len(t) for t, _ in self._streams.values())

    def state(self) -> dict:
        """Plain snapshot used to compare repository contents."""
        return {
            "streams": {k: (t.tolist(), v.tolist()) for k, (t, v) in sorted(self._streams.items())},
            "surveys": self.surveys(),
        }

    # -- persistence ----------------------------------------------------
    def save(self, directory: str | Path) -> None:
        directory = Path(directory)
        (directory / "streams").mkdir(parents=True, exist_ok=True)
        index = []
        for i, (key, (t, v)) in enumerate(sorted(self._streams.items())):
            name = f"s{i:05d}.npy"
            rec = np.empty(len(t), dtype=[("t", "<i8"), ("v", "<f8")])
            rec["t"], rec["v"] = t, v
            np.save(directory / "streams" / name, rec)
            index.append({"source_id": key[0], "channel": key[1], "file": name})
        (directory / "index.json").write_text(json.dumps(index, indent=1) + "\n")
        (directory / "site.txt").write_text(self.site.dumps())
        write_surveys(self.surveys(), directory / "surveys.csv")

    @classmethod
    def load(cls, directory: str | Path) -> "Repository":
        directory = Path(directory)
        if not (directory / "index.json").exists():
            raise IngestError(f"{directory} is not a repository (no index.json)")
        repo = cls(SiteMetadata.read(directory / "site.txt"))
        for entry in json.loads((directory / "index.json").read_text()):
            rec = np.load(directory / "streams" / entry["file"])
            repo._streams[(entry["source_id"], entry["channel"])] = (
                np.ascontiguousarray(rec["t"]), np.ascontiguousarray(rec["v"]))
        ingest_surveys(directory / "surveys.csv", repo)
        return repo


def _stream_arrays(repo: Repository, source: str, channel: str):
    r = repo.stream(source, channel)
    return r.timestamps, r.values


def query_readings(repo: Repository, sources: str | Sequence[str], channel: str,
                   start: int, end: int, inclusion: str = "[)") -> Readings:
    """Readings of ``channel`` pooled over ``sources`` inside a time range.

    ``inclusion`` is ``"[)"`` (start-inclusive, end-exclusive) or ``"(]"``.
    Unknown sources or channels give an empty result.
    """
    if start >= end:
        raise RangeError(f"empty or inverted range [{start}, {end})")
    if inclusion == "[)":
        side_lo, side_hi = "left", "left"
    elif inclusion == "(]":
        side_lo, side_hi = "right", "right"
    else:
        raise ContractError(f"unknown inclusion convention {inclusion!r}")
    if isinstance(sources, str):
        sources = (sources,)
    parts_t, parts_v = [], []
    for source in sources:
        t, v = _stream_arrays(repo, source, channel)
        lo = np.searchsorted(t, start, side=side_lo)
        hi = np.searchsorted(t, end, side=side_hi)
        if hi > lo:
            parts_t.append(t[lo:hi])
            parts_v.append(v[lo:hi])
    if not parts_t:
        return Readings(_EMPTY_T, _EMPTY_V)
    if len(parts_t) == 1:
        return Readings(parts_t[0], parts_v[0])
    t = np.concatenate(parts_t)
    v = np.concatenate(parts_v)
    order = np.argsort(t, kind="stable")
    return Readings(t[order], v[order])


# -- file ingestion ------------------------------------------------------

CHUNK_ROWS = 500_000


def _read_csv(path: str | Path, header: Sequence[str]):
    """Yield the file as string-typed frames of at most ``CHUNK_ROWS`` rows.

    Chunking bounds peak memory on full-rate phone logs. Chunks arrive in
    file order, so last-write-wins across chunks matches a single read.
    """
    try:
        columns = pd.read_csv(path, dtype=str, nrows=0).columns
        missing = [c for c in header if c not in columns]
        if missing:
            raise IngestError(f"{path}: missing header column(s) {missing}")
        yield from pd.read_csv(path, dtype=str, keep_default_na=False, chunksize=CHUNK_ROWS)
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc


def _timestamps(col: pd.Series) -> tuple[np.ndarray, np.ndarray]:
    num = pd.to_numeric(col, errors="coerce").to_numpy(dtype=np.float64)
    ok = np.isfinite(num) & (num >= 0) & (num == np.floor(num))
    return np.where(ok, num, 0).astype(np.int64), ok


def _numbers(col: pd.Series) -> np.ndarray:
    return pd.to_numeric(col, errors="coerce").to_numpy(dtype=np.float64)


def _insert_frame(repo: Repository, frame: pd.DataFrame, summary: IngestSummary) -> None:
    for (source, channel), grp in frame.groupby(["source", "channel"], sort=True):
        net_new, dup = repo.insert(source, channel, grp["t"].to_numpy(), grp["v"].to_numpy())
        summary.per_channel[channel] = summary.per_channel.get(channel, 0) + len(grp)
        summary.net_new += net_new
        summary.duplicates += dup


def ingest_ambient(path: str | Path, repo: Repository) -> IngestSummary:
    summary = IngestSummary()
    for raw in _read_csv(path, AMBIENT_HEADER):
        t, t_ok = _timestamps(raw["timestamp_ms"])
        v = _numbers(raw["value"])
        channel = raw["channel"].str.strip()
        ok = t_ok & np.isfinite(v) & channel.isin(AMBIENT_CHANNELS).to_numpy()
        ok &= (raw["source_id"].str.strip() != "").to_numpy()
        summary.accepted += int(ok.sum())
        summary.rejected += int((~ok).sum())
        frame = pd.DataFrame({"source": raw["source_id"].str.strip(), "channel": channel,
                              "t": t, "v": v})[ok]
        _insert_frame(repo, frame, summary)
    return summary


def ingest_physical(path: str | Path, repo: Repository) -> IngestSummary:
    summary = IngestSummary()
    for raw in _read_csv(path, PHYSICAL_HEADER):
        t, t_ok = _timestamps(raw["timestamp_ms"])
        sensor = raw["sensor"].str.strip().to_numpy()
        xyz = np.column_stack([_numbers(raw[c]) for c in ("x", "y", "z")])
        finite = np.isfinite(xyz)
        three_axis = np.isin(sensor, ("accel", "gyro"))
        pedo = sensor == "pedometer"
        pid = raw["participant_id"].str.strip().to_numpy()
        ok = t_ok & (pid != "")
        ok &= (three_axis & finite.all(axis=1)) | (pedo & finite[:, 0])
        summary.accepted += int(ok.sum())
        summary.rejected += int((~ok).sum())
        parts = []
        for name, channels in PHYSICAL_SENSORS.items():
            rows = ok & (sensor == name)
            for axis, ch in enumerate(channels):
                parts.append(pd.DataFrame({"source": pid[rows], "channel": ch,
                                           "t": t[rows], "v": xyz[rows, axis]}))
        _insert_frame(repo, pd.concat(parts, ignore_index=True), summary)
    return summary


def _opt_int(text: str) -> int | None:
    text = text.strip()
    if not text:
        return None
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


_TRUE = {"true", "1", "yes", "y", "t"}
_FALSE = {"false", "0", "no", "n", "f"}


def _opt_bool(text: str) -> bool | None:
    text = text.strip().lower()
    if not text:
        return None
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def parse_survey_row(row: dict) -> SurveyReport:
    concentration = _opt_int(row["concentration"])
    if concentration is None:
        raise ValueError("concentration is required")
    return SurveyReport(
        participant_id=row["participant_id"].strip(),
        date=dt.date.fromisoformat(row["date"].strip()),
        slot=row["slot"].strip(),
        concentration=concentration,
        stress=_opt_int(row.get("stress", "")),
        thermal_comfort=_opt_int(row.get("thermal_comfort", "")),
        sleep_quality=_opt_int(row.get("sleep_quality", "")),
        n_formal_meetings=_opt_int(row.get("n_formal_meetings", "")),
        n_informal_meetings=_opt_int(row.get("n_informal_meetings", "")),
        n_projects=_opt_int(row.get("n_projects", "")),
        preferred_seat=_opt_bool(row.get("preferred_seat", "")),
        zone=row.get("zone", "").strip() or None,
    )


def ingest_surveys(path: str | Path, repo: Repository) -> IngestSummary:
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in SURVEY_HEADER if c not in (reader.fieldnames or ())]
            if missing:
                raise IngestError(f"{path}: missing header column(s) {missing}")
            rows = list(reader)
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    summary = IngestSummary()
    for row in rows:
        try:
            report = parse_survey_row(row)
            if not report.participant_id:
                raise ValueError("empty participant id")
        except (ValueError, TypeError, AttributeError):
            summary.rejected += 1
            continue
        summary.accepted += 1
        if repo.add_survey(report):
            summary.replacements += 1
        else:
            summary.net_new += 1
    summary.per_channel["concentration"] = summary.accepted
    return summary


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def write_surveys(reports: Iterable[SurveyReport], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SURVEY_HEADER)
        for r in reports:
            writer.writerow([_fmt(getattr(r, f.name)) for f in fields(SurveyReport)])
