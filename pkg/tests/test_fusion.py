import dataclasses
import datetime as dt

import numpy as np
import pytest

from concentra.errors import EmptyDatasetError
from concentra.fusion import (
    BASE_WINDOW_MS,
    COVERAGE_FAIL_AMBIENT,
    COVERAGE_FAIL_PHYSICAL,
    NO_SURVEY,
    FusionParams,
    ambient_bounds_for,
    base_windows,
    build_dataset,
    build_instance,
    local_datetime_ms,
    read_dataset,
    write_dataset,
)
from concentra.store import Repository
from concentra.synth import SynthConfig, generate
from concentra.windowing import WindowBounds

DAY = dt.date(2019, 3, 4)


def hm(h, m, s=0, tz="UTC"):
    return local_datetime_ms(DAY, dt.time(h, m, s), tz)


@pytest.fixture(scope="module")
def corpus():
    return generate(SynthConfig(n_participants=2, n_days=1, physical_rate=1.0, seed=3))


@pytest.fixture
def repo(corpus):
    return corpus.to_repository()


def test_morning_grid():
    ws = base_windows(DAY, "morning")
    assert len(ws) == 30
    assert (ws[0].start, ws[0].end) == (hm(8, 0), hm(8, 5))
    assert (ws[-1].start, ws[-1].end) == (hm(10, 25), hm(10, 30))
    assert all((w.start - hm(8, 0)) % BASE_WINDOW_MS == 0 for w in ws)
    assert len(base_windows(DAY, "afternoon")) == 60


def test_grid_follows_site_timezone():
    tz = "Australia/Melbourne"
    ws = base_windows(DAY, "morning", tz)
    assert ws[0].start == hm(8, 0, tz=tz) != hm(8, 0)


def test_centroid_alignment():
    amb = ambient_bounds_for(WindowBounds(hm(9, 0), hm(9, 5)))
    assert (amb.start, amb.end, amb.inclusion) == (hm(8, 32, 30), hm(9, 2, 30), "(]")
    amb = ambient_bounds_for(WindowBounds(hm(8, 0), hm(8, 5)))
    assert (amb.start, amb.end) == (hm(7, 32, 30), hm(8, 2, 30))


def test_happy_path_dataset(repo):
    ds = build_dataset(repo, "morning")
    assert len(ds) == 60 and ds.skips == []
    for inst in ds.instances:
        physical_start = inst.end_timestamp - BASE_WINDOW_MS
        assert inst.ambient.end_timestamp - physical_start == 150_000
        assert inst.label == repo.survey(inst.participant_id, inst.date, "morning").concentration
    X = ds.matrix()
    assert X.shape == (60, 99) and np.isfinite(X).all()
    assert "participant_id" not in ds.feature_names
    by_unit = {}
    for inst in ds.instances:
        by_unit.setdefault((inst.participant_id, inst.date), set()).add(inst.label)
    assert all(len(v) == 1 for v in by_unit.values())


def test_missing_survey_skips_whole_slot(corpus):
    repo = corpus.to_repository()
    del repo._surveys[("p01", DAY, "morning")]
    ds = build_dataset(repo, "morning")
    skips = [s for s in ds.skips if s.participant_id == "p01"]
    assert len(skips) == 30 and {s.reason for s in skips} == {NO_SURVEY}
    assert len(ds) + len(ds.skips) == 2 * 1 * 30


def test_silent_stations_and_missing_physical(corpus):
    repo = Repository(corpus.site)
    for (source, ch), (t, v) in corpus.streams.items():
        if source.startswith("st"):
            continue
        if source == "p02" and ch.startswith("accel"):
            keep = t < hm(9, 0)
            t, v = t[keep], v[keep]
        repo.insert(source, ch, t, v)
    for r in corpus.surveys:
        repo.add_survey(r)
    base = WindowBounds(hm(9, 0), hm(9, 5))
    assert build_instance(repo, "p01", DAY, base, "morning") == COVERAGE_FAIL_AMBIENT
    assert build_instance(repo, "p02", DAY, base, "morning") == COVERAGE_FAIL_PHYSICAL


def test_physical_rate_defaults_from_site(repo):
    assert repo.site.physical_rate == 1.0 and len(build_dataset(repo, "morning")) == 60
    # at a 50 Hz nominal rate the 1 Hz streams cover 2% of every window
    with pytest.raises(EmptyDatasetError):
        build_dataset(repo, "morning", params=FusionParams(physical_rate=50.0))


def test_empty_repository():
    with pytest.raises(EmptyDatasetError):
        build_dataset(Repository(), "morning")


def test_jobs_do_not_change_output(repo):
    a = build_dataset(repo, "afternoon", jobs=1)
    b = build_dataset(repo, "afternoon", jobs=3)
    assert a.instances == b.instances and a.skips == b.skips


def test_export_round_trip(repo, tmp_path):
    ds = build_dataset(repo, "morning")
    paths = write_dataset(ds, tmp_path)
    header = paths["dataset"].read_text().splitlines()[0].split(",")
    assert header[:3] == ["participant_id", "end_timestamp_ms", "label"] and len(header) == 102
    back = read_dataset(paths["dataset"])
    assert np.array_equal(back.matrix(), ds.matrix())
    assert [dataclasses.astuple(i)[:3] for i in back.instances] == \
        [dataclasses.astuple(i)[:3] for i in ds.instances]
    assert back.schema_hash() == ds.schema_hash()
    assert paths["audit"].read_text().startswith("participant_id,date,window_start_ms,reason")
