"""Command-line pipeline: synth -> ingest -> fuse -> evaluate -> analyze -> report.

Every subcommand accepts ``--config FILE``: a key = value text file whose
keys are flag names (``label-noise`` or ``label_noise``). Flags given on the
command line override file values. Exit status is 0 on success, 1 on data
errors (missing or unusable input) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from pathlib import Path

from concentra import __version__
from concentra.analytics import write_analytics
from concentra.errors import ConcentraError, DataError, DegenerateFitError, ParameterError
from concentra.evaluation import ARMS, derive_seed, run_experiment, write_reports
from concentra.fusion import FusionParams, build_dataset, dataset_paths, read_dataset, write_dataset
from concentra.models import FAMILIES, ClassifierSpec
from concentra.store import (
    SLOTS,
    Repository,
    SiteMetadata,
    ingest_ambient,
    ingest_physical,
    ingest_surveys,
)
from concentra.synth import SIGNAL_MODES, SynthConfig, generate

DATA_ENV = "CONCENTRA_DATA_DIR"
INPUT_FILES = {"ambient": "ambient.csv", "physical": "physical.csv", "surveys": "surveys.csv",
               "site": "site.txt"}


class UsageError(Exception):
    pass


def _csv_list(choices):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"choose from {', '.join(choices)}; got {text!r}")
        return items
    return parse


def _slots(text):
    return list(SLOTS) if text == "all" else _csv_list(SLOTS)(text)


def _default_repo() -> str:
    return os.environ.get(DATA_ENV, "repository")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key = value file mirroring these flags")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                   help="worker threads; changes wall-clock only (default: all processors)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="concentra",
        description="Workplace concentration prediction from ambient and physical sensing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    fmt = argparse.RawDescriptionHelpFormatter

    p = sub.add_parser("synth", formatter_class=fmt, help="generate a synthetic corpus",
                       description="Write ambient.csv, physical.csv, surveys.csv, site.txt and "
                                   "ground_truth.csv (participant_id,date,slot,true_label,"
                                   "informative_features) to --out.")
    _add_common(p)
    p.add_argument("--participants", type=int, default=8)
    p.add_argument("--days", type=int, default=5)
    p.add_argument("--stations", type=int, default=4, help="stations on the floor")
    p.add_argument("--rate", type=float, default=5.0, help="physical sampling rate in Hz")
    p.add_argument("--label-noise", type=float, default=0.05)
    p.add_argument("--mode", choices=SIGNAL_MODES, default="joint", help="planted signal mode")
    p.add_argument("--site", default="Site-1")
    p.add_argument("--timezone", default="UTC")
    p.add_argument("--out", default="data", help="output directory (default data)")

    p = sub.add_parser("ingest", formatter_class=fmt, help="load CSV files into the repository",
                       description="Ingest ambient.csv (source_id,timestamp_ms,channel,value), "
                                   "physical.csv (participant_id,timestamp_ms,sensor,x,y,z), "
                                   "surveys.csv and site.txt from --data into --repo. An existing "
                                   "repository is extended; duplicates resolve last-write-wins.")
    _add_common(p)
    p.add_argument("--data", default="data", help="directory holding the input files")
    p.add_argument("--repo", default=None, help=f"repository directory (default ${DATA_ENV} or ./repository)")

    p = sub.add_parser("fuse", formatter_class=fmt, help="build labeled datasets",
                       description="Writes <site>_<slot>_dataset.csv, _manifest.json and _skips.csv "
                                   "to --out for each requested slot.")
    _add_common(p)
    p.add_argument("--repo", default=None, help=f"repository directory (default ${DATA_ENV} or ./repository)")
    p.add_argument("--site", default=None, help="site id (default: from site metadata)")
    p.add_argument("--slot", type=_slots, default=list(SLOTS), help="morning, afternoon or all")
    p.add_argument("--min-coverage", type=float, default=0.5)
    p.add_argument("--physical-rate", type=float, default=None,
                   help="nominal physical Hz (default: site metadata, else 50)")
    p.add_argument("--out", default="out")

    p = sub.add_parser("evaluate", formatter_class=fmt, help="cross-validate classifiers",
                       description="Runs every classifier x feature arm on each fused dataset and "
                                   "writes <site>_<slot>_results.csv/.txt (accuracy %), "
                                   "_importance.csv, _reports.json and _run_manifest.json.")
    _add_common(p)
    p.add_argument("--site", default=None, help="site id (default: every dataset in --out)")
    p.add_argument("--slot", type=_slots, default=list(SLOTS))
    p.add_argument("--families", type=_csv_list(FAMILIES), default=list(FAMILIES))
    p.add_argument("--arms", type=_csv_list(ARMS), default=list(ARMS))
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument("--top", type=int, default=20, help="importance entries to keep")
    p.add_argument("--out", default="out", help="directory with datasets; results go here too")

    p = sub.add_parser("analyze", formatter_class=fmt, help="survey correlations and group summaries",
                       description="Writes correlation_<filter>.csv and groups_<key>.csv to --out.")
    _add_common(p)
    p.add_argument("--repo", default=None, help=f"repository directory (default ${DATA_ENV} or ./repository)")
    p.add_argument("--participant", default=None, help="participant for the individual panels")
    p.add_argument("--out", default="out/analytics")

    p = sub.add_parser("report", formatter_class=fmt, help="collect result tables into report.txt",
                       description="Concatenates every <site>_<slot>_results.txt in --out with the "
                                   "top feature importances into report.txt.")
    _add_common(p)
    p.add_argument("--out", default="out")
    p.add_argument("--top", type=int, default=10)
    return parser


# -- config files ---------------------------------------------------------

def read_config(path: str | Path) -> dict[str, str]:
    values = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.replace("-", "_")] = value
    return values


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            values = read_config(args.config)
        except UsageError as exc:
            parser.error(str(exc))
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in subparser._actions}
        unknown = sorted(set(values) - known - {"config"})
        if unknown:
            subparser.error(f"unknown config keys: {', '.join(unknown)}")
        values.pop("config", None)
        subparser.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


# -- subcommands ----------------------------------------------------------

def _repo_dir(args) -> Path:
    return Path(args.repo or _default_repo())


def _load_repo(path: Path) -> Repository:
    if not (path / "index.json").exists():
        raise DataError(f"no repository at {path}; run ingest first")
    return Repository.load(path)


def cmd_synth(args) -> int:
    cfg = SynthConfig(n_participants=args.participants, n_days=args.days,
                      stations_per_floor=args.stations, physical_rate=args.rate,
                      label_noise=args.label_noise, signal_mode=args.mode,
                      seed=derive_seed(args.seed, "synth"), site_id=args.site, timezone=args.timezone)
    paths = generate(cfg).write(args.out)
    print(f"wrote synthetic corpus ({cfg.signal_mode}) to {Path(args.out)} "
          f"[{', '.join(sorted(p.name for p in paths.values()))}]")
    return 0


def cmd_ingest(args) -> int:
    data = Path(args.data)
    missing = [name for name in INPUT_FILES.values() if not (data / name).exists()]
    if missing:
        raise DataError(f"missing input file(s) in {data}: {', '.join(missing)}")
    repo_dir = _repo_dir(args)
    site = SiteMetadata.read(data / INPUT_FILES["site"])
    if (repo_dir / "index.json").exists():
        repo = Repository.load(repo_dir)
        repo.site = site
    else:
        repo = Repository(site)
    for name, fn in (("ambient", ingest_ambient), ("physical", ingest_physical),
                     ("surveys", ingest_surveys)):
        s = fn(data / INPUT_FILES[name], repo)
        print(f"{name}: accepted {s.accepted}, rejected {s.rejected}, new {s.net_new}, "
              f"duplicates {s.duplicates}, replacements {s.replacements}")
    repo.save(repo_dir)
    print(f"repository saved to {repo_dir}")
    return 0


def cmd_fuse(args) -> int:
    repo = _load_repo(_repo_dir(args))
    rate = args.physical_rate or repo.site.physical_rate or FusionParams.physical_rate
    params = FusionParams(physical_rate=rate, min_coverage=args.min_coverage)
    for slot in args.slot:
        ds = build_dataset(repo, slot, args.site, params, jobs=args.jobs)
        paths = write_dataset(ds, args.out)
        print(f"{ds.site} {slot}: {len(ds)} instances, {len(ds.skips)} skipped -> {paths['dataset']}")
    return 0


def _dataset_files(out: Path, site: str | None, slots) -> list[Path]:
    if site is not None:
        files = [dataset_paths(out, site, slot)["dataset"] for slot in slots]
        missing = [str(f) for f in files if not f.exists()]
        if missing:
            raise DataError(f"missing dataset file(s): {', '.join(missing)}")
        return files
    files = sorted(f for f in out.glob("*_dataset.csv")
                   if any(f.name.endswith(f"_{slot}_dataset.csv") for slot in slots))
    if not files:
        raise DataError(f"no fused datasets in {out}; run fuse first")
    return files


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def cmd_evaluate(args) -> int:
    out = Path(args.out)
    for path in _dataset_files(out, args.site, args.slot):
        ds = read_dataset(path)
        fold_seed = derive_seed(args.seed, "folds", ds.site, ds.slot)
        reports = []
        for family in args.families:
            spec = ClassifierSpec(family, {}, derive_seed(args.seed, "model", ds.site, ds.slot, family))
            for arm in args.arms:
                reports.append(run_experiment(ds, spec, arm, k=args.k, seed=fold_seed,
                                              top=args.top, jobs=args.jobs))
        manifest = {
            "version": __version__,
            "dataset": path.name,
            "dataset_sha256": _sha256(path),
            "schema_hash": ds.schema_hash(),
            "master_seed": args.seed,
            "fold_seed": fold_seed,
            "k": args.k,
            "families": args.families,
            "arms": args.arms,
            "specs": [r.spec for r in reports[::len(args.arms)]],
        }
        paths = write_reports(reports, out, manifest)
        print(paths["txt"].read_text(), end="")
    return 0


def cmd_analyze(args) -> int:
    repo = _load_repo(_repo_dir(args))
    surveys = repo.surveys()
    if not surveys:
        raise DataError("repository holds no survey reports")
    written = write_analytics(surveys, args.out, args.participant)
    print(f"wrote {len(written)} analytics files to {args.out}")
    return 0


def cmd_report(args) -> int:
    out = Path(args.out)
    tables = sorted(out.glob("*_results.txt"))
    if not tables:
        raise DataError(f"no result tables in {out}; run evaluate first")
    parts = []
    for table in tables:
        parts.append(table.read_text())
        imp = table.with_name(table.name.replace("_results.txt", "_importance.csv"))
        if imp.exists():
            with open(imp, newline="") as fh:
                rows = [r for r in csv.DictReader(fh) if r["arm"] == "A+P"
                        and int(r["rank"]) <= args.top and float(r["weight"]) > 0]
            for family in dict.fromkeys(r["classifier"] for r in rows):
                parts.append(f"Top features, {family}, A+P:")
                parts += [f"  {r['rank']:>2}. {r['feature']:<22} {float(r['weight']):.4f}"
                          for r in rows if r["classifier"] == family]
            parts.append("")
    (out / "report.txt").write_text("\n".join(parts).rstrip("\n") + "\n")
    print(f"wrote {out / 'report.txt'}")
    return 0


COMMANDS = {"synth": cmd_synth, "ingest": cmd_ingest, "fuse": cmd_fuse, "evaluate": cmd_evaluate,
            "analyze": cmd_analyze, "report": cmd_report}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return COMMANDS[args.command](args)
    except (DataError, DegenerateFitError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ParameterError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except ConcentraError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
