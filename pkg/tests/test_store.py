import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from concentra.errors import ContractError, IngestError, RangeError
from concentra.store import (
    Repository,
    SiteMetadata,
    SurveyReport,
    ingest_ambient,
    ingest_physical,
    ingest_surveys,
    query_readings,
    write_surveys,
)

AMB_HEADER = "source_id,timestamp_ms,channel,value\n"
PHYS_HEADER = "participant_id,timestamp_ms,sensor,x,y,z\n"
SURVEY_HEADER = ("participant_id,date,slot,concentration,stress,thermal_comfort,sleep_quality,"
                 "n_formal_meetings,n_informal_meetings,n_projects,preferred_seat,zone\n")


def write(path, text):
    path.write_text(text)
    return path


def test_ambient_three_valid_rows(tmp_path):
    f = write(tmp_path / "a.csv", AMB_HEADER + "st1,1000,temperature,21.5\nst1,1000,co2,450\nst1,1000,noise,40\n")
    s = ingest_ambient(f, Repository())
    assert (s.accepted, s.rejected) == (3, 0)


def test_ambient_rejects_unknown_channel_and_bad_values(tmp_path):
    f = write(tmp_path / "a.csv", AMB_HEADER + "st1,1000,sunlight,3\nst1,1000,co2,nan\n"
              "st1,x,co2,400\nst1,2000,co2,410\n")
    repo = Repository()
    s = ingest_ambient(f, repo)
    assert (s.accepted, s.rejected) == (1, 3)
    assert repo.stream("st1", "co2").values.tolist() == [410.0]


def test_double_ingest_adds_nothing(tmp_path):
    f = write(tmp_path / "a.csv", AMB_HEADER + "st1,1000,co2,450\nst1,2000,co2,460\n")
    repo = Repository()
    first = ingest_ambient(f, repo)
    second = ingest_ambient(f, repo)
    assert first.net_new == 2 and second.net_new == 0 and second.duplicates == 2
    assert len(repo.stream("st1", "co2")) == 2


def test_missing_file_and_header(tmp_path):
    with pytest.raises(IngestError):
        ingest_ambient(tmp_path / "nope.csv", Repository())
    f = write(tmp_path / "a.csv", "a,b,c\n1,2,3\n")
    with pytest.raises(IngestError):
        ingest_ambient(f, Repository())


def test_accel_row_expands_to_three_axes(tmp_path):
    f = write(tmp_path / "p.csv", PHYS_HEADER + "p1,0,accel,0.1,0.2,9.8\n")
    repo = Repository()
    s = ingest_physical(f, repo)
    assert s.accepted == 1 and sum(s.per_channel.values()) == 3
    assert [repo.stream("p1", c).values.tolist() for c in ("accel_x", "accel_y", "accel_z")] == \
        [[0.1], [0.2], [9.8]]


def test_fifty_hz_ten_seconds(tmp_path):
    rows = "".join(f"p1,{20 * i},accel,0,0,9.8\n" for i in range(500))
    repo = Repository()
    ingest_physical(write(tmp_path / "p.csv", PHYS_HEADER + rows), repo)
    assert sum(len(repo.stream("p1", c)) for c in ("accel_x", "accel_y", "accel_z")) == 1500


def test_pedometer_passthrough_and_missing_axis(tmp_path):
    t = 1_000_000
    text = PHYS_HEADER + f"p1,{t},pedometer,100,,\np1,{t + 60000},pedometer,100,,\n" \
        f"p1,{t + 120000},pedometer,103,,\np1,{t},gyro,1,2,\n"
    repo = Repository()
    s = ingest_physical(write(tmp_path / "p.csv", text), repo)
    assert (s.accepted, s.rejected) == (3, 1)
    assert repo.stream("p1", "pedometer").values.tolist() == [100, 100, 103]
    assert len(repo.stream("p1", "gyro_x")) == 0


def _survey_row(pid="p1", date="2019-03-04", slot="morning", conc="4"):
    return f"{pid},{date},{slot},{conc},,,,,,,,\n"


def test_surveys(tmp_path):
    text = SURVEY_HEADER + _survey_row() + _survey_row(conc="6") + _survey_row(slot="noon") \
        + _survey_row(slot="afternoon", conc="3") + _survey_row(slot="afternoon", conc="5")
    repo = Repository()
    s = ingest_surveys(write(tmp_path / "s.csv", text), repo)
    assert (s.accepted, s.rejected, s.replacements) == (3, 2, 1)
    d = dt.date(2019, 3, 4)
    assert repo.survey("p1", d, "morning").concentration == 4
    assert repo.survey("p1", d, "afternoon").concentration == 5


def test_survey_round_trip(tmp_path):
    reports = [SurveyReport("p1", dt.date(2019, 3, 4), "morning", 4, 2, 3, 5, 1, 0, 3, True, "quiet"),
               SurveyReport("p2", dt.date(2019, 3, 4), "afternoon", 1)]
    write_surveys(reports, tmp_path / "s.csv")
    repo = Repository()
    ingest_surveys(tmp_path / "s.csv", repo)
    assert repo.surveys() == reports


def test_survey_report_validation():
    with pytest.raises(ContractError):
        SurveyReport("p1", dt.date(2019, 3, 4), "morning", 0)
    with pytest.raises(ContractError):
        SurveyReport("p1", dt.date(2019, 3, 4), "evening", 3)


def _repo_with(points):
    repo = Repository()
    for source, ts in points.items():
        repo.insert(source, "co2", ts, [float(t) for t in ts])
    return repo


def test_query_boundary_conventions():
    repo = _repo_with({"st1": [10, 20, 30]})
    assert query_readings(repo, "st1", "co2", 10, 30, "[)").timestamps.tolist() == [10, 20]
    assert query_readings(repo, "st1", "co2", 10, 30, "(]").timestamps.tolist() == [20, 30]
    assert len(query_readings(repo, "ghost", "co2", 0, 100)) == 0
    with pytest.raises(RangeError):
        query_readings(repo, "st1", "co2", 30, 10)


def test_query_pools_stations_sorted():
    repo = _repo_with({"st1": [1, 3, 5, 7, 9], "st2": [2, 4, 6, 8, 10]})
    r = query_readings(repo, ["st1", "st2"], "co2", 0, 11)
    assert r.timestamps.tolist() == list(range(1, 11))


def test_insert_last_write_wins():
    repo = Repository()
    repo.insert("st1", "co2", [5, 1, 5], [1.0, 2.0, 3.0])
    net, dup = repo.insert("st1", "co2", [1], [9.0])
    assert (net, dup) == (0, 1)
    r = repo.stream("st1", "co2")
    assert r.timestamps.tolist() == [1, 5] and r.values.tolist() == [9.0, 3.0]


def test_chunked_ingest_matches_single_read(tmp_path, monkeypatch):
    import concentra.store as store
    text = PHYS_HEADER + "".join(f"p1,{t % 4},accel,{t},0,1\n" for t in range(7)) + "p1,9,gyro,1,x,1\n"
    path = write(tmp_path / "physical.csv", text)
    whole = Repository()
    expected = ingest_physical(path, whole)
    monkeypatch.setattr(store, "CHUNK_ROWS", 3)
    chunked = Repository()
    got = ingest_physical(path, chunked)
    assert got == expected and (got.accepted, got.rejected, got.duplicates) == (7, 1, 9)
    a, b = whole.stream("p1", "accel_x"), chunked.stream("p1", "accel_x")
    assert a.timestamps.tolist() == b.timestamps.tolist() == [0, 1, 2, 3]
    assert a.values.tolist() == b.values.tolist() == [4.0, 5.0, 6.0, 3.0]


rows = st.lists(st.tuples(st.sampled_from(["st1", "st2"]), st.integers(0, 10_000),
                          st.sampled_from(["co2", "noise"]), st.integers(-1000, 1000)),
                min_size=1, max_size=60)


def _csv(rows_):
    return AMB_HEADER + "".join(f"{s},{t},{c},{v}\n" for s, t, c, v in rows_)


@settings(max_examples=50, deadline=None)
@given(rows, st.randoms(use_true_random=False), st.integers(0, 60))
def test_ingest_properties(tmp_path_factory, rows_, rnd, cut):
    tmp = tmp_path_factory.mktemp("ing")
    whole = Repository()
    ingest_ambient(write(tmp / "all.csv", _csv(rows_)), whole)

    # round trip: last write per (source, channel, t) survives, in time order
    expected = {}
    for s, t, c, v in rows_:
        expected[(s, c, t)] = float(v)
    for (s, c) in {(s, c) for s, _, c, _ in rows_}:
        r = query_readings(whole, s, c, 0, 10_001)
        want = sorted((t, v) for (s2, c2, t), v in expected.items() if (s2, c2) == (s, c))
        assert list(zip(r.timestamps.tolist(), r.values.tolist())) == want

    # splitting the file in two gives the same repository
    cut = min(cut, len(rows_))
    split = Repository()
    ingest_ambient(write(tmp / "a.csv", _csv(rows_[:cut])), split)
    ingest_ambient(write(tmp / "b.csv", _csv(rows_[cut:])), split)
    assert split.state() == whole.state()

    # shuffled arrival still yields sorted, complete streams
    uniq = list({(s, t, c): (s, t, c, v) for s, t, c, v in rows_}.values())
    rnd.shuffle(uniq)
    shuffled = Repository()
    ingest_ambient(write(tmp / "c.csv", _csv(uniq)), shuffled)
    for key in shuffled.stream_keys():
        t = shuffled.stream(*key).timestamps
        assert np.all(np.diff(t) > 0)
    assert shuffled.n_readings() == len(expected)


def test_site_metadata_round_trip():
    text = ("site_id = Site-2\ntimezone = Australia/Melbourne\nphysical_rate = 50\n"
            "zones = quiet,window\nfloor.3 = a,b\nfloor.4 = c\nparticipant_floor.p1 = 4\n")
    meta = SiteMetadata.parse(text)
    assert meta.stations_for("p1") == ("c",)
    assert meta.stations_for("p9") == ("a", "b", "c")
    assert SiteMetadata.parse(meta.dumps()) == meta
    with pytest.raises(IngestError):
        SiteMetadata.parse("colour = blue\n")


def test_repository_save_load(tmp_path):
    repo = _repo_with({"st1": [1, 2, 3]})
    repo.site = SiteMetadata(site_id="S", floors={"1": ("st1",)})
    repo.add_survey(SurveyReport("p1", dt.date(2019, 3, 4), "morning", 4))
    repo.save(tmp_path / "r")
    back = Repository.load(tmp_path / "r")
    assert back.state() == repo.state() and back.site == repo.site
