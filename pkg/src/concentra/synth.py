"""Seeded synthetic corpus with a planted feature -> concentration rule.

Each (participant, day, slot) unit gets an activity regime and the floor gets
a daily CO2 level. Labels come from quantile-binning a score built from the
noiseless slot aggregates of those latent values, then a fraction of labels
is corrupted. Every random draw comes from a PRNG substream keyed by the
entity it belongs to, so output does not depend on generation order.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from concentra.errors import ParameterError
from concentra.fusion import SLOT_RANGES, local_datetime_ms
from concentra.store import (
    MAGNET_CHANNELS,
    PHYSICAL_SENSORS,
    SLOTS,
    STATION_CHANNELS,
    Repository,
    SiteMetadata,
    SurveyReport,
    write_surveys,
)

SIGNAL_MODES = ("ambient_only", "physical_only", "joint", "single_feature", "shuffled")
N_LEVELS = 5

# activity regimes, sedentary -> walking
ACCEL_SIGMA = np.array([0.05, 0.25, 0.6, 1.1, 1.8])
GYRO_SIGMA = np.array([0.02, 0.1, 0.3, 0.6, 1.0])
STEPS_PER_5MIN = np.array([0.0, 15.0, 60.0, 140.0, 260.0])

# daily floor CO2 offsets are spread evenly over this range (ppm)
CO2_DAY_SPREAD = 400.0

GRAVITY = 9.81
MAGNET_FIELD = np.array([22.0, -4.0, -41.0])

DAY_START = dt.time(7, 0)
PHYSICAL_START = dt.time(8, 0)
DAY_END = dt.time(15, 30)
ZONES = ("quiet", "collaborative", "window", "hot-desk")

INFORMATIVE = {
    "joint": ("co2_mean", "accel_mag_std"),
    "ambient_only": ("co2_mean",),
    "physical_only": ("accel_mag_std",),
    "shuffled": (),
}


@dataclass
class SynthConfig:
    n_participants: int = 8
    n_days: int = 5
    stations_per_floor: int = 4
    physical_rate: float = 5.0
    label_noise: float = 0.05
    signal_mode: str = "joint"
    seed: int = 0
    single_feature: str = "pedometer_steps"
    skew: float = 0.0
    site_id: str = "Site-1"
    timezone: str = "UTC"
    start_date: dt.date = dt.date(2019, 3, 4)
    station_interval_s: int = 300
    magnet_rate: float = 1.0
    pedometer_interval_s: int = 10

    def __post_init__(self):
        for name in ("n_participants", "n_days", "stations_per_floor"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if self.physical_rate <= 0 or self.magnet_rate <= 0:
            raise ParameterError("sampling rates must be positive")
        if not 0.0 <= self.label_noise < 0.5:
            raise ParameterError("label_noise must lie in [0, 0.5)")
        if self.signal_mode not in SIGNAL_MODES:
            raise ParameterError(f"signal_mode must be one of {SIGNAL_MODES}")
        if not 0.0 <= self.skew < 1.0:
            raise ParameterError("skew must lie in [0, 1)")

    @property
    def informative_features(self) -> tuple[str, ...]:
        if self.signal_mode == "single_feature":
            return (self.single_feature,)
        return INFORMATIVE[self.signal_mode]


def _rng(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


# stream kinds used in substream keys
_K_DAY, _K_STATION, _K_UNIT, _K_PHYS, _K_MAGNET, _K_PEDO, _K_SURVEY, _K_LABEL, _K_META = range(9)


def zscore(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    sd = x.std()
    return np.zeros_like(x) if sd == 0 else (x - x.mean()) / sd


def quantile_bin(score: np.ndarray, n_bins: int = N_LEVELS, skew: float = 0.0) -> np.ndarray:
    """Levels 1..n_bins from score quantiles; equal scores share a level.

    ``skew > 0`` shrinks successive bins geometrically to produce imbalance.
    """
    probs = (1.0 - skew) ** np.arange(n_bins)
    cum = np.cumsum(probs / probs.sum())[:-1]
    edges = np.quantile(score, cum)
    return 1 + np.searchsorted(edges, score, side="right")


def planted_label(aggregates: dict[str, np.ndarray], signal_mode: str,
                  rng: np.random.Generator | None = None, feature: str = "pedometer_steps",
                  skew: float = 0.0) -> np.ndarray:
    """Concentration level per unit from slot-level feature aggregates.

    joint: bins of ``z(co2_mean) + z(accel_mag_std)``; ambient_only and
    physical_only keep one of the two terms; single_feature bins ``feature``;
    shuffled draws levels uniformly (or skewed) at random.
    """
    if signal_mode == "shuffled":
        rng = rng or np.random.default_rng()
        n = len(next(iter(aggregates.values())))
        if skew > 0:
            probs = (1.0 - skew) ** np.arange(N_LEVELS)
            return 1 + rng.choice(N_LEVELS, size=n, p=probs / probs.sum())
        # a random deal of a balanced sequence: uniform per unit, balanced overall
        return 1 + rng.permutation(np.resize(np.arange(N_LEVELS), n))
    if signal_mode == "joint":
        score = zscore(aggregates["co2_mean"]) + zscore(aggregates["accel_mag_std"])
    elif signal_mode == "ambient_only":
        score = zscore(aggregates["co2_mean"])
    elif signal_mode == "physical_only":
        score = zscore(aggregates["accel_mag_std"])
    elif signal_mode == "single_feature":
        score = zscore(aggregates[feature])
    else:
        raise ParameterError(f"unknown signal mode {signal_mode!r}")
    return quantile_bin(score, N_LEVELS, skew)


@dataclass
class Unit:
    participant_id: str
    date: dt.date
    slot: str
    regime: int
    co2_mean: float
    accel_mag_std: float
    pedometer_steps: float
    true_label: int = 0
    label: int = 0


@dataclass
class SynthCorpus:
    config: SynthConfig
    site: SiteMetadata
    streams: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]]
    surveys: list[SurveyReport]
    units: list[Unit] = field(default_factory=list)

    @property
    def participants(self) -> list[str]:
        return [f"p{i + 1:02d}" for i in range(self.config.n_participants)]

    @property
    def stations(self) -> list[str]:
        return list(self.site.floors["1"])

    def to_repository(self) -> Repository:
        repo = Repository(self.site)
        for (source, channel), (t, v) in self.streams.items():
            repo.insert(source, channel, t, v)
        for report in self.surveys:
            repo.add_survey(report)
        return repo

    def write(self, out_dir: str | Path) -> dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / f"{name}.csv" for name in ("ambient", "physical", "surveys", "ground_truth")}
        paths["site"] = out / "site.txt"
        paths["site"].write_text(self.site.dumps())
        self._write_ambient(paths["ambient"])
        self._write_physical(paths["physical"])
        write_surveys(self.surveys, paths["surveys"])
        with open(paths["ground_truth"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["participant_id", "date", "slot", "true_label", "informative_features"])
            informative = ";".join(self.config.informative_features) or "none"
            for u in self.units:
                w.writerow([u.participant_id, str(u.date), u.slot, u.true_label, informative])
        return paths

    def _write_ambient(self, path: Path) -> None:
        header = True
        for source in self.stations + self.participants:
            channels = STATION_CHANNELS if source in self.stations else MAGNET_CHANNELS
            for ch in channels:
                t, v = self.streams[(source, ch)]
                frame = pd.DataFrame({"source_id": source, "timestamp_ms": t, "channel": ch, "value": v})
                frame.to_csv(path, mode="w" if header else "a", header=header, index=False,
                             lineterminator="\n")
                header = False

    def _write_physical(self, path: Path) -> None:
        header = True
        for pid in self.participants:
            for sensor, channels in PHYSICAL_SENSORS.items():
                t = self.streams[(pid, channels[0])][0]
                cols = {"participant_id": pid, "timestamp_ms": t, "sensor": sensor}
                for axis, name in zip(("x", "y", "z"), ("x", "y", "z")):
                    idx = "xyz".index(axis)
                    cols[name] = self.streams[(pid, channels[idx])][1] if idx < len(channels) else np.nan
                frame = pd.DataFrame(cols)
                frame.to_csv(path, mode="w" if header else "a", header=header, index=False,
                             na_rep="", lineterminator="\n")
                header = False


def _times(date, start, end, period_ms, tz, offset_ms=0):
    t0 = local_datetime_ms(date, start, tz) + offset_ms
    t1 = local_datetime_ms(date, end, tz)
    return np.arange(t0, t1, period_ms, dtype=np.int64)


def _hour_of_day(t, date, tz):
    return 8.0 + (t - local_datetime_ms(date, dt.time(8, 0), tz)) / 3_600_000.0


def _station_day(cfg, station_idx, day_idx, date, day_level, null_ambient):
    # without day structure every day replays the same noise, so ambient
    # readings cannot tell days (and hence label units) apart
    rng = _rng(cfg.seed, _K_STATION, station_idx, 0 if null_ambient else day_idx + 1)
    srng = _rng(cfg.seed, _K_STATION, station_idx)
    offset = int(srng.integers(0, 60_000))
    t = _times(date, DAY_START, DAY_END, cfg.station_interval_s * 1000, cfg.timezone, offset)
    h = _hour_of_day(t, date, cfg.timezone)
    occupancy = np.clip((h - 8.0) / 2.0, 0.0, 1.0)
    bias = srng.normal(0.0, 1.0, size=5)
    lv = {k: 0.0 for k in day_level} if null_ambient else day_level
    n = len(t)
    values = {
        "temperature": np.round(21.5 + lv["temperature"] + 0.8 * occupancy + 0.3 * bias[0]
                                + rng.normal(0, 0.1, n), 1),
        "humidity": np.round(45.0 + lv["humidity"] - 2.0 * occupancy + bias[1]
                             + rng.normal(0, 0.5, n), 0),
        "pressure": np.round(1013.0 + lv["pressure"] + 0.2 * (h - 12.0) + 0.2 * bias[2]
                             + rng.normal(0, 0.1, n), 1),
        "noise": np.round(40.0 + 8.0 * occupancy + bias[3] + rng.normal(0, 2.0, n), 0),
        "co2": np.round(450.0 + lv["co2"] + 120.0 * occupancy + 10.0 * bias[4]
                        + rng.normal(0, 15.0, n), 0),
    }
    return t, values


def _co2_latent(cfg, day_level_co2, slot, date, null_ambient):
    """Noiseless floor-average CO2 over a slot."""
    lo, hi = SLOT_RANGES[slot]
    t = _times(date, lo, hi, 60_000, cfg.timezone)
    occupancy = np.clip((_hour_of_day(t, date, cfg.timezone) - 8.0) / 2.0, 0.0, 1.0)
    return 450.0 + (0.0 if null_ambient else day_level_co2) + 120.0 * occupancy.mean()


def generate(config: SynthConfig) -> SynthCorpus:
    cfg = config
    mode = cfg.signal_mode
    null_ambient = mode in ("shuffled", "single_feature")
    participants = [f"p{i + 1:02d}" for i in range(cfg.n_participants)]
    stations = [f"st{i + 1:02d}" for i in range(cfg.stations_per_floor)]
    dates = []
    d = cfg.start_date
    while len(dates) < cfg.n_days:
        if d.weekday() < 5:
            dates.append(d)
        d += dt.timedelta(days=1)
    site = SiteMetadata(site_id=cfg.site_id, timezone=cfg.timezone, floors={"1": tuple(stations)},
                        zones=ZONES, physical_rate=cfg.physical_rate)

    # floor-level daily ambient offsets; CO2 levels are spread evenly then shuffled
    drng = _rng(cfg.seed, _K_DAY)
    co2_levels = (np.linspace(0.0, CO2_DAY_SPREAD, cfg.n_days) if cfg.n_days > 1
                  else np.array([CO2_DAY_SPREAD / 2]))
    co2_levels = drng.permutation(co2_levels) + drng.uniform(-15.0, 15.0, cfg.n_days)
    day_levels = [{"co2": co2_levels[i], "temperature": drng.normal(0, 1.0),
                   "humidity": drng.normal(0, 4.0), "pressure": drng.normal(0, 5.0)}
                  for i in range(cfg.n_days)]

    streams: dict[tuple[str, str], tuple[np.ndarray, np.ndarray]] = {}
    for si, st in enumerate(stations):
        parts = [_station_day(cfg, si, di, date, day_levels[di], null_ambient)
                 for di, date in enumerate(dates)]
        t = np.concatenate([p[0] for p in parts])
        for ch in STATION_CHANNELS:
            streams[(st, ch)] = (t, np.concatenate([p[1][ch] for p in parts]))

    # per-unit latent regimes and step rates
    units: list[Unit] = []
    for pi, pid in enumerate(participants):
        for di, date in enumerate(dates):
            for sk, slot in enumerate(SLOTS):
                urng = _rng(cfg.seed, _K_UNIT, pi, di, sk)
                regime = int(urng.integers(0, N_LEVELS))
                steps = float(STEPS_PER_5MIN[regime])
                units.append(Unit(pid, date, slot, regime,
                                  _co2_latent(cfg, day_levels[di]["co2"], slot, date, null_ambient),
                                  float(ACCEL_SIGMA[regime]), steps))

    unit_of = {(u.participant_id, u.date, u.slot): u for u in units}
    for pi, pid in enumerate(participants):
        _physical_streams(cfg, pi, pid, dates, unit_of, streams)

    for sk, slot in enumerate(SLOTS):
        slot_units = [u for u in units if u.slot == slot]
        agg = {name: np.array([getattr(u, name) for u in slot_units])
               for name in ("co2_mean", "accel_mag_std", "pedometer_steps")}
        agg[cfg.single_feature] = agg.get(cfg.single_feature, agg["pedometer_steps"])
        levels = planted_label(agg, mode, _rng(cfg.seed, _K_LABEL, sk), cfg.single_feature, cfg.skew)
        nrng = _rng(cfg.seed, _K_LABEL, sk, 1)
        # an exact share of units is corrupted so the noise level does not vary by seed
        flips = np.zeros(len(slot_units), dtype=bool)
        flips[nrng.permutation(len(slot_units))[:int(round(cfg.label_noise * len(slot_units)))]] = True
        shifts = nrng.integers(1, N_LEVELS, len(slot_units))
        for u, level, flip, shift in zip(slot_units, levels, flips, shifts):
            u.true_label = int(level)
            u.label = int((level - 1 + shift) % N_LEVELS + 1) if flip else int(level)

    surveys = [_survey(cfg, pi, di, u) for u in units
               for pi in [participants.index(u.participant_id)] for di in [dates.index(u.date)]]
    return SynthCorpus(cfg, site, streams, surveys, units)


def _physical_streams(cfg, pi, pid, dates, unit_of, streams):
    period_ms = 1000.0 / cfg.physical_rate
    accel_t, accel, gyro_t, gyro = [], [], [], []
    mag_t, mag, ped_t, ped = [], [], [], []
    count = float(_rng(cfg.seed, _K_PEDO, pi).integers(0, 5000))
    shuffled = cfg.signal_mode == "shuffled"
    per_window_regime = shuffled or cfg.signal_mode == "single_feature"
    for di, date in enumerate(dates):
        rng = _rng(cfg.seed, _K_PHYS, pi, di)
        t0 = local_datetime_ms(date, PHYSICAL_START, cfg.timezone)
        t1 = local_datetime_ms(date, DAY_END, cfg.timezone)
        n = int((t1 - t0) / period_ms)
        t = t0 + np.round(np.arange(n) * period_ms).astype(np.int64)
        split = local_datetime_ms(date, SLOT_RANGES["morning"][1], cfg.timezone)
        block = (t - t0) // 300_000
        n_blocks = int(block.max()) + 1
        unit_regime = np.array([unit_of[(pid, date, s)].regime for s in SLOTS])
        if per_window_regime:
            block_regime = rng.integers(0, N_LEVELS, n_blocks)
            regime = block_regime[block]
        else:
            regime = np.where(t < split, unit_regime[0], unit_regime[1])
        jitter = np.exp(rng.normal(0.0, 0.05, n_blocks))[block]
        # the phone is set down at a new angle for every block
        tilt = rng.normal(0.0, 0.15, (n_blocks, 2))
        g = np.column_stack([tilt, np.ones(n_blocks)])
        g = (GRAVITY * g / np.linalg.norm(g, axis=1, keepdims=True))[block]
        sa = (ACCEL_SIGMA[regime] * jitter)[:, None]
        sg = (GYRO_SIGMA[regime] * jitter)[:, None]
        accel.append(np.round(g + sa * rng.standard_normal((n, 3)), 4))
        gyro.append(np.round(sg * rng.standard_normal((n, 3)), 4))
        accel_t.append(t)
        gyro_t.append(t)

        mrng = _rng(cfg.seed, _K_MAGNET, pi, di)
        mt = t0 + np.round(np.arange(int((t1 - t0) * cfg.magnet_rate / 1000))
                           * 1000.0 / cfg.magnet_rate).astype(np.int64)
        mag_t.append(mt)
        mag.append(np.round(MAGNET_FIELD + mrng.normal(0.0, 0.6, (len(mt), 3)), 2))

        prng = _rng(cfg.seed, _K_PEDO, pi, di)
        pt = np.arange(t0, t1, cfg.pedometer_interval_s * 1000, dtype=np.int64)
        frac = cfg.pedometer_interval_s / 300.0
        if shuffled:
            rates = STEPS_PER_5MIN[prng.integers(0, N_LEVELS, n_blocks)][(pt - t0) // 300_000]
        else:
            rates = np.array([unit_of[(pid, date, s)].pedometer_steps for s in SLOTS])
            rates = np.where(pt < split, rates[0], rates[1])
        steps = prng.poisson(rates * frac)
        ped.append(count + np.cumsum(steps).astype(np.float64))
        ped_t.append(pt)
        count = float(ped[-1][-1]) if len(ped[-1]) else count

    at, A = np.concatenate(accel_t), np.concatenate(accel)
    gt, G = np.concatenate(gyro_t), np.concatenate(gyro)
    for i, ch in enumerate(PHYSICAL_SENSORS["accel"]):
        streams[(pid, ch)] = (at, np.ascontiguousarray(A[:, i]))
    for i, ch in enumerate(PHYSICAL_SENSORS["gyro"]):
        streams[(pid, ch)] = (gt, np.ascontiguousarray(G[:, i]))
    streams[(pid, "pedometer")] = (np.concatenate(ped_t), np.concatenate(ped))
    mt, M = np.concatenate(mag_t), np.concatenate(mag)
    for i, ch in enumerate(MAGNET_CHANNELS):
        streams[(pid, ch)] = (mt, np.ascontiguousarray(M[:, i]))


def _survey(cfg, pi, di, u: Unit) -> SurveyReport:
    rng = _rng(cfg.seed, _K_SURVEY, pi, di, SLOTS.index(u.slot))
    prng = _rng(cfg.seed, _K_META, pi)
    clip = lambda x: int(np.clip(round(x), 1, 5))  # noqa: E731
    c = u.label
    return SurveyReport(
        participant_id=u.participant_id,
        date=u.date,
        slot=u.slot,
        concentration=c,
        stress=clip(6 - c + rng.normal(0, 0.8)),
        thermal_comfort=clip(3 + rng.normal(0, 1.0)),
        sleep_quality=clip(1.5 + 0.5 * c + rng.normal(0, 0.9)),
        n_formal_meetings=int(rng.poisson(1.5)),
        n_informal_meetings=int(rng.poisson(2.0)),
        n_projects=int(prng.integers(1, 5)),
        preferred_seat=bool(rng.random() < 0.7),
        zone=ZONES[int(rng.integers(0, len(ZONES)))],
    )


def config_dict(cfg: SynthConfig) -> dict:
    d = asdict(cfg)
    d["start_date"] = str(cfg.start_date)
    return d
