"""Full-rate smoke run: a 50 Hz corpus written to CSV, ingested back and fused.

Checks that every morning base window sees the nominal 15000 samples per
accelerometer axis, then cross-validates a decision tree on the result.

    python3 scripts/smoke_50hz.py [--out DIR]
"""

import argparse
import tempfile
import time
from pathlib import Path

from concentra.evaluation import run_experiment
from concentra.fusion import base_windows, build_dataset
from concentra.models import ClassifierSpec
from concentra.store import Repository, SiteMetadata, ingest_ambient, ingest_physical, ingest_surveys
from concentra.synth import SynthConfig, generate
from concentra.windowing import materialize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default=None, help="where to keep the CSV files (default: temp dir)")
    ap.add_argument("--participants", type=int, default=2)
    ap.add_argument("--days", type=int, default=2)
    args = ap.parse_args()

    t0 = time.perf_counter()
    cfg = SynthConfig(n_participants=args.participants, n_days=args.days, physical_rate=50.0, seed=0)
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(args.out or tmp)
        paths = generate(cfg).write(out)
        print(f"generated + written in {time.perf_counter() - t0:.0f} s")
        repo = Repository(SiteMetadata.read(paths["site"]))
        for fn, key in ((ingest_ambient, "ambient"), (ingest_physical, "physical"), (ingest_surveys, "surveys")):
            s = fn(paths[key], repo)
            print(f"  {key}: {s.accepted} rows, {s.rejected} rejected")
            assert s.rejected == 0
    day = repo.survey_dates()[0]
    base = base_windows(day, "morning", repo.site.timezone)[3]
    w = materialize(repo, base, "p01", "accel_x", 50.0)
    print(f"window {base.start}..{base.end}: {w.count} of {w.expected_count} samples, coverage {w.coverage}")
    assert w.expected_count == 15000 and w.coverage == 1.0

    ds = build_dataset(repo, "morning")
    print(f"morning dataset: {len(ds)} instances, {len(ds.skips)} skipped")
    r = run_experiment(ds, ClassifierSpec("decision_tree"), "A+P", k=5)
    print(f"decision tree A+P accuracy {r.mean_accuracy:.3f}; total {time.perf_counter() - t0:.0f} s")


if __name__ == "__main__":
    main()
