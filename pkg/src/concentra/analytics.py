"""Correlation matrices over survey factors and grouped five-number summaries."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from concentra.errors import ContractError, DataError
from concentra.features import quantiles

FACTORS = (
    "concentration", "stress", "thermal_comfort", "sleep_quality",
    "n_projects", "n_formal_meetings", "n_informal_meetings",
)
GROUP_KEYS = ("zone", "n_formal_meetings", "n_informal_meetings", "preferred_seat", "slot")


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; NaN when either variable is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ContractError("pearson needs two equal-length 1-D sequences")
    if len(x) < 2:
        raise ContractError("pearson needs at least two observations")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx <= 0.0 or syy <= 0.0:
        return math.nan
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


@dataclass(frozen=True)
class SurveyFilter:
    slot: str | None = None
    preferred_seat: bool | None = None
    participant: str | None = None

    def accepts(self, report) -> bool:
        return ((self.slot is None or report.slot == self.slot)
                and (self.preferred_seat is None or report.preferred_seat == self.preferred_seat)
                and (self.participant is None or report.participant_id == self.participant))

    @property
    def name(self) -> str:
        parts = []
        if self.participant is not None:
            parts.append(self.participant)
        parts.append(self.slot or "all")
        if self.preferred_seat is not None:
            parts.append("preferred" if self.preferred_seat else "not_preferred")
        return "_".join(parts)


@dataclass
class CorrelationMatrix:
    variables: tuple[str, ...]
    r: np.ndarray
    counts: np.ndarray
    filter: SurveyFilter

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.r)

    def to_rows(self) -> list[list[str]]:
        rows = [["variable", *self.variables]]
        for name, line in zip(self.variables, self.r):
            rows.append([name, *("" if math.isnan(v) else repr(float(v)) for v in line)])
        return rows


def _field(record, key: str):
    if isinstance(record, dict):
        if key not in record:
            raise ContractError(f"record has no field {key!r}")
        return record[key]
    if not hasattr(record, key):
        raise ContractError(f"record has no field {key!r}")
    return getattr(record, key)


def correlation_matrix(surveys: Iterable, flt: SurveyFilter | None = None,
                       variables: Sequence[str] = FACTORS) -> CorrelationMatrix:
    """Pairwise-complete Pearson matrix over the selected reports."""
    flt = flt or SurveyFilter()
    selected = [s for s in surveys if flt.accepts(s)]
    if not selected:
        raise DataError(f"no survey reports match filter {flt.name!r}")
    cols = np.array([[np.nan if _field(s, v) is None else float(_field(s, v)) for v in variables]
                     for s in selected])
    p = len(variables)
    r = np.full((p, p), np.nan)
    counts = np.zeros((p, p), dtype=np.int64)
    for i in range(p):
        for j in range(i, p):
            ok = ~np.isnan(cols[:, i]) & ~np.isnan(cols[:, j])
            counts[i, j] = counts[j, i] = int(ok.sum())
            if ok.sum() < 2:
                continue
            value = pearson(cols[ok, i], cols[ok, j])
            if i == j and not math.isnan(value):
                value = 1.0
            r[i, j] = r[j, i] = value
    return CorrelationMatrix(tuple(variables), r, counts, flt)


@dataclass(frozen=True)
class FiveNumber:
    n: int
    min: float
    q1: float
    median: float
    q3: float
    max: float


@dataclass
class GroupSummary:
    key: str
    measures: tuple[str, ...]
    groups: dict[Any, dict[str, FiveNumber | None]]
    counts: dict[Any, int]

    def to_rows(self) -> list[list[str]]:
        rows = [["key", "group", "n", "measure", "measure_n", "min", "q1", "median", "q3", "max"]]
        for g, stats in self.groups.items():
            for m in self.measures:
                s = stats[m]
                vals = ["", "", "", "", ""] if s is None else [
                    repr(float(x)) for x in (s.min, s.q1, s.median, s.q3, s.max)]
                rows.append([self.key, _group_label(g), str(self.counts[g]), m,
                             "0" if s is None else str(s.n), *vals])
        return rows


def _group_label(g) -> str:
    if g is None:
        return "NA"
    if isinstance(g, bool):
        return "true" if g else "false"
    return str(g)


def five_number(values: Sequence[float]) -> FiveNumber:
    v = np.asarray(values, dtype=np.float64)
    q1, med, q3 = quantiles(v, (0.25, 0.5, 0.75))
    return FiveNumber(len(v), float(v.min()), float(q1), float(med), float(q3), float(v.max()))


def group_summary(records: Iterable, key: str,
                  measures: Sequence[str] = ("concentration", "stress")) -> GroupSummary:
    """Five-number summaries of each measure per value of ``key``.

    Records lacking the key value form an ``NA`` group so counts conserve.
    """
    groups: dict[Any, list] = {}
    for rec in records:
        groups.setdefault(_field(rec, key), []).append(rec)
    order = sorted(groups, key=lambda g: (g is None, str(type(g)), g if g is not None else 0))
    out, counts = {}, {}
    for g in order:
        recs = groups[g]
        counts[g] = len(recs)
        stats = {}
        for m in measures:
            vals = [_field(r, m) for r in recs]
            vals = [float(v) for v in vals if v is not None]
            stats[m] = five_number(vals) if vals else None
        out[g] = stats
    return GroupSummary(key, tuple(measures), out, counts)


def write_rows(rows: list[list[str]], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def default_filters(surveys: Sequence, participant: str | None = None) -> list[SurveyFilter]:
    """Panels: per slot overall, per slot by seat preference, and one participant per slot."""
    flts = []
    for slot in ("morning", "afternoon"):
        flts.append(SurveyFilter(slot=slot))
        flts.append(SurveyFilter(slot=slot, preferred_seat=True))
        flts.append(SurveyFilter(slot=slot, preferred_seat=False))
    if participant is None and surveys:
        participant = sorted({s.participant_id for s in surveys})[0]
    if participant is not None:
        flts += [SurveyFilter(slot=s, participant=participant) for s in ("morning", "afternoon")]
    return flts


def write_analytics(surveys: Sequence, out_dir: str | Path, participant: str | None = None) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for flt in default_filters(surveys, participant):
        try:
            cm = correlation_matrix(surveys, flt)
        except DataError:
            continue
        path = out_dir / f"correlation_{flt.name}.csv"
        write_rows(cm.to_rows(), path)
        written.append(path)
    for key in GROUP_KEYS:
        path = out_dir / f"groups_{key}.csv"
        write_rows(group_summary(surveys, key).to_rows(), path)
        written.append(path)
    return written
