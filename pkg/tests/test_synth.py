import csv
import hashlib

import numpy as np
import pytest

from concentra.errors import ParameterError
from concentra.store import Repository, SiteMetadata, ingest_ambient, ingest_physical, ingest_surveys
from concentra.synth import N_LEVELS, SynthConfig, generate, planted_label, quantile_bin

TINY = dict(n_participants=4, n_days=3, physical_rate=1.0, stations_per_floor=2)


@pytest.fixture(scope="module")
def written(tmp_path_factory):
    corpus = generate(SynthConfig(**TINY, seed=11))
    out = tmp_path_factory.mktemp("synth")
    return corpus, corpus.write(out)


def digest(paths):
    return {k: hashlib.sha256(p.read_bytes()).hexdigest() for k, p in paths.items()}


def test_survey_count(written):
    corpus, paths = written
    assert len(corpus.surveys) == 4 * 3 * 2
    with open(paths["surveys"]) as fh:
        assert len(list(csv.DictReader(fh))) == 24


def test_files_are_reproducible(written, tmp_path):
    _, paths = written
    again = generate(SynthConfig(**TINY, seed=11)).write(tmp_path)
    assert digest(paths) == digest(again)


def test_files_ingest_cleanly_and_match_memory(written):
    corpus, paths = written
    repo = Repository(SiteMetadata.read(paths["site"]))
    for fn, key in ((ingest_ambient, "ambient"), (ingest_physical, "physical"), (ingest_surveys, "surveys")):
        s = fn(paths[key], repo)
        assert s.rejected == 0 and s.duplicates == 0
    assert repo.state() == corpus.to_repository().state()
    assert repo.site == corpus.site


def test_ground_truth_sidecar(written):
    corpus, paths = written
    with open(paths["ground_truth"]) as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["participant_id", "date", "slot", "true_label", "informative_features"]
    assert len(rows) == 24 and {r["informative_features"] for r in rows} == {"co2_mean;accel_mag_std"}
    assert [int(r["true_label"]) for r in rows] == [u.true_label for u in corpus.units]


def test_shuffled_sidecar(tmp_path):
    corpus = generate(SynthConfig(**TINY, signal_mode="shuffled", seed=1))
    paths = corpus.write(tmp_path)
    assert "none" in paths["ground_truth"].read_text()


def test_noiseless_joint_labels_follow_the_rule():
    corpus = generate(SynthConfig(**TINY, label_noise=0.0, seed=5))
    for slot in ("morning", "afternoon"):
        units = [u for u in corpus.units if u.slot == slot]
        agg = {k: np.array([getattr(u, k) for u in units]) for k in ("co2_mean", "accel_mag_std")}
        assert planted_label(agg, "joint").tolist() == [u.label for u in units]
        assert all(u.label == u.true_label for u in units)


def test_label_noise_rate():
    corpus = generate(SynthConfig(n_participants=40, n_days=5, physical_rate=0.2,
                                  stations_per_floor=1, label_noise=0.2, seed=2))
    flipped = np.mean([u.label != u.true_label for u in corpus.units])
    assert flipped == pytest.approx(0.2)


def test_planted_label_middle_and_single_feature():
    agg = {"co2_mean": np.arange(5.0), "accel_mag_std": np.arange(5.0), "pedometer_steps": np.zeros(5)}
    assert planted_label(agg, "joint")[2] == 3
    agg["pedometer_steps"] = np.array([4.0, 3, 2, 1, 0])
    assert planted_label(agg, "single_feature").tolist() == [5, 4, 3, 2, 1]
    assert planted_label(agg, "ambient_only").tolist() == [1, 2, 3, 4, 5]


def test_shuffled_frequencies():
    agg = {"co2_mean": np.zeros(10_000)}
    levels = planted_label(agg, "shuffled", np.random.default_rng(0))
    freq = np.bincount(levels, minlength=N_LEVELS + 1)[1:] / 10_000
    assert np.all(np.abs(freq - 0.2) <= 0.02)


def test_quantile_bins_balance_and_skew():
    score = np.random.default_rng(0).normal(size=1000)
    assert np.all(np.bincount(quantile_bin(score))[1:] == 200)
    skewed = np.bincount(quantile_bin(score, skew=0.5))[1:]
    assert np.all(np.diff(skewed) < 0)


def test_entity_streams_do_not_depend_on_population():
    a = generate(SynthConfig(**{**TINY, "n_participants": 2}, seed=4))
    b = generate(SynthConfig(**{**TINY, "n_participants": 3}, seed=4))
    for key in a.streams:
        assert np.array_equal(a.streams[key][0], b.streams[key][0])
        assert np.array_equal(a.streams[key][1], b.streams[key][1])


def test_config_validation():
    with pytest.raises(ParameterError):
        SynthConfig(n_participants=0)
    with pytest.raises(ParameterError):
        SynthConfig(label_noise=0.5)
    with pytest.raises(ParameterError):
        SynthConfig(signal_mode="mixed")
