import datetime as dt
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concentra.analytics import (
    FACTORS,
    SurveyFilter,
    correlation_matrix,
    group_summary,
    pearson,
    write_analytics,
)
from concentra.errors import ContractError, DataError
from concentra.store import SurveyReport

from oracles import pearson as oracle_pearson


def test_pearson_examples():
    x = [1.0, 2.0, 3.0, 4.0]
    assert pearson(x, x) == 1.0
    assert pearson(x, [-v for v in x]) == -1.0
    assert pearson(x, [2 * v + 3 for v in x]) == pytest.approx(1.0, abs=1e-12)
    assert math.isnan(pearson(x, [5.0] * 4))
    with pytest.raises(ContractError):
        pearson([1.0], [2.0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)), min_size=3, max_size=100))
def test_pearson_matches_oracle(pairs):
    x, y = map(list, zip(*pairs))
    if np.std(x) < 1e-6 or np.std(y) < 1e-6:
        return
    assert abs(pearson(x, y) - oracle_pearson(x, y)) <= 1e-12


def reports(n=40, seed=0):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        c = rng.randint(1, 5)
        out.append(SurveyReport(
            f"p{i % 4}", dt.date(2019, 3, 4) + dt.timedelta(days=i // 8),
            "morning" if i % 2 else "afternoon", c, stress=6 - c, thermal_comfort=3,
            sleep_quality=rng.randint(1, 5), n_formal_meetings=rng.choice([0, 1, 5]),
            n_informal_meetings=None if i % 7 == 0 else rng.randint(0, 3), n_projects=rng.randint(1, 4),
            preferred_seat=None if i % 5 == 0 else bool(i % 3), zone=rng.choice(["quiet", "window"])))
    return out


def test_matrix_properties():
    cm = correlation_matrix(reports())
    r = cm.r
    assert cm.variables == FACTORS
    i, j = FACTORS.index("concentration"), FACTORS.index("stress")
    assert r[i, j] == pytest.approx(-1.0, abs=1e-12)
    tc = FACTORS.index("thermal_comfort")
    assert np.isnan(r[tc]).all() and np.isnan(r[:, tc]).all()
    defined = ~np.isnan(r)
    assert np.array_equal(np.nan_to_num(r), np.nan_to_num(r.T))
    assert all(r[k, k] == 1.0 for k in range(len(FACTORS)) if defined[k, k])
    # pairwise-complete deletion: the informal-meetings column drops only its own missing rows
    inf = FACTORS.index("n_informal_meetings")
    assert cm.counts[inf, inf] < cm.counts[i, i] == 40


def test_order_invariance():
    rs = reports()
    shuffled = rs[:]
    random.Random(1).shuffle(shuffled)
    a, b = correlation_matrix(rs), correlation_matrix(shuffled)
    assert np.allclose(a.r, b.r, atol=1e-12, equal_nan=True)
    ga, gb = group_summary(rs, "zone"), group_summary(shuffled, "zone")
    assert ga.to_rows() == gb.to_rows()


def test_filters():
    rs = reports()
    cm = correlation_matrix(rs, SurveyFilter(slot="morning", preferred_seat=True))
    assert cm.counts[0, 0] == sum(1 for r in rs if r.slot == "morning" and r.preferred_seat is True)
    with pytest.raises(DataError):
        correlation_matrix(rs, SurveyFilter(participant="nobody"))


def test_group_examples():
    rows = [{"g": "x", "concentration": 3, "stress": 1}] * 3
    s = group_summary(rows, "g")
    five = s.groups["x"]["concentration"]
    assert five.median == 3 and five.q3 - five.q1 == 0
    rows = [{"m": 0, "concentration": 2, "stress": 1}, {"m": 0, "concentration": 4, "stress": 1},
            {"m": 5, "concentration": 1, "stress": 1}, {"m": 5, "concentration": 1, "stress": 1}]
    s = group_summary(rows, "m")
    assert s.groups[0]["concentration"].median == 3 and s.groups[5]["concentration"].median == 1
    with pytest.raises(ContractError):
        group_summary(rows, "colour")


@pytest.mark.parametrize("key", ["zone", "n_formal_meetings", "preferred_seat", "n_informal_meetings"])
def test_groups_conserve_counts(key):
    rs = reports()
    s = group_summary(rs, key)
    assert sum(s.counts.values()) == len(rs)


def test_write_analytics(tmp_path):
    paths = write_analytics(reports(), tmp_path)
    names = {p.name for p in paths}
    assert "correlation_morning.csv" in names and "groups_zone.csv" in names
    header = (tmp_path / "correlation_morning.csv").read_text().splitlines()[0]
    assert header == "variable," + ",".join(FACTORS)
    groups = (tmp_path / "groups_preferred_seat.csv").read_text()
    assert ",NA," in groups and ",true," in groups
