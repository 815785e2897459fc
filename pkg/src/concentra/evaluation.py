"""Stratified k-fold cross-validation and the A / P / A+P experiment runner."""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from concentra.errors import ContractError, DegenerateFitError, ParameterError
from concentra.fusion import Dataset
from concentra.models import FAMILIES, TREE_FAMILIES, ClassifierSpec, feature_importance, fit

ARMS = ("A", "P", "A+P")


def derive_seed(master: int, *labels) -> int:
    """Stable 31-bit seed for a named sub-stage of a run."""
    text = "/".join([str(int(master)), *map(str, labels)])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "big") & 0x7FFFFFFF


@dataclass
class FoldAssignment:
    k: int
    folds: np.ndarray
    seed: int
    sparse_classes: list = field(default_factory=list)

    def test_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds == fold)

    def train_index(self, fold: int) -> np.ndarray:
        return np.flatnonzero(self.folds != fold)


def stratified_folds(labels: Sequence, k: int, seed: int) -> FoldAssignment:
    """Shuffle each class with a seeded PRNG and deal it round-robin over the folds.

    Dealing continues where the previous class stopped, so fold sizes also
    differ by at most one. Classes with fewer than ``k`` members are listed
    in ``sparse_classes``.
    """
    labels = np.asarray(labels)
    n = len(labels)
    if k < 2:
        raise ParameterError("k must be at least 2")
    if k > n:
        raise ParameterError(f"k={k} exceeds the number of instances ({n})")
    rng = np.random.default_rng(seed)
    folds = np.empty(n, dtype=np.int64)
    sparse = []
    nxt = 0
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        rng.shuffle(idx)
        folds[idx] = (nxt + np.arange(len(idx))) % k
        nxt = (nxt + len(idx)) % k
        if len(idx) < k:
            sparse.append(cls.item() if hasattr(cls, "item") else cls)
    return FoldAssignment(k, folds, seed, sparse)


def accuracy(predicted: Sequence, truth: Sequence) -> float:
    """Fraction of positions where prediction equals truth."""
    predicted, truth = np.asarray(predicted), np.asarray(truth)
    if predicted.shape != truth.shape:
        raise ContractError("predicted and truth lengths differ")
    if len(truth) == 0:
        raise ContractError("accuracy needs at least one test case")
    return int((predicted == truth).sum()) / len(truth)


def arm_names(dataset: Dataset, arm: str) -> tuple[str, ...]:
    if arm == "A":
        return dataset.ambient_names
    if arm == "P":
        return dataset.physical_names
    if arm == "A+P":
        return dataset.ambient_names + dataset.physical_names
    raise ContractError(f"unknown feature arm {arm!r}")


def select_arm(dataset: Dataset, arm: str) -> tuple[np.ndarray, tuple[str, ...]]:
    if not len(dataset):
        raise ContractError("dataset is empty")
    names = arm_names(dataset, arm)
    return dataset.matrix(names), names


@dataclass
class FoldResult:
    fold: int
    n_train: int
    n_test: int
    accuracy: float | None
    failed: bool = False
    participants: dict = field(default_factory=dict)


@dataclass
class ExperimentReport:
    site: str
    slot: str
    family: str
    arm: str
    spec: dict
    k: int
    seed: int
    classes: list
    folds: list[FoldResult]
    confusion: list[list[int]]
    importances: list[tuple[str, float]] = field(default_factory=list)
    sparse_classes: list = field(default_factory=list)
    time_range: tuple[int, int] = (0, 0)
    schema_hash: str = ""

    @property
    def fold_accuracies(self) -> list[float]:
        return [f.accuracy for f in self.folds if not f.failed]

    @property
    def mean_accuracy(self) -> float:
        accs = self.fold_accuracies
        return sum(accs) / len(accs) if accs else float("nan")

    @property
    def failed_folds(self) -> list[int]:
        return [f.fold for f in self.folds if f.failed]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["mean_accuracy"] = self.mean_accuracy
        d["importances"] = [list(x) for x in self.importances]
        d["time_range"] = list(self.time_range)
        return d


def cross_validate(X: np.ndarray, y: np.ndarray, spec: ClassifierSpec, folds: FoldAssignment,
                   names: Sequence[str] | None = None, groups: Sequence[str] | None = None,
                   keep_models: bool = False, jobs: int = 1):
    """Fit on k-1 folds, predict the held-out fold.

    Returns ``(fold results, confusion matrix, classes, models)``; models are
    only kept on request. Any standardisation happens inside the model fit,
    so only training-fold rows shape it.
    """
    classes = np.unique(y)
    pos = {c: i for i, c in enumerate(classes.tolist())}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)

    def one(fold):
        tr, te = folds.train_index(fold), folds.test_index(fold)
        parts = dict(sorted(Counter(groups[i] for i in te).items())) if groups is not None else {}
        if len(te) == 0:
            return FoldResult(fold, len(tr), 0, None, True, parts), None, None
        try:
            model = fit(X[tr], y[tr], spec, names)
        except DegenerateFitError:
            return FoldResult(fold, len(tr), len(te), None, True, parts), None, None
        pred = model.predict(X[te])
        return FoldResult(fold, len(tr), len(te), accuracy(pred, y[te]), False, parts), (te, pred), model

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            outs = list(pool.map(one, range(folds.k)))
    else:
        outs = [one(f) for f in range(folds.k)]
    results, models = [], []
    for res, pair, model in outs:
        results.append(res)
        models.append(model if keep_models else None)
        if pair is not None:
            te, pred = pair
            for t, p in zip(y[te].tolist(), pred.tolist()):
                confusion[pos[t], pos[p]] += 1
    return results, confusion, classes, models


def run_experiment(dataset: Dataset, spec: ClassifierSpec, arm: str, k: int = 10, seed: int = 0,
                   top: int = 20, jobs: int = 1) -> ExperimentReport:
    X, names = select_arm(dataset, arm)
    y = dataset.labels
    if len(y) < k:
        raise ContractError(f"dataset has {len(y)} instances, fewer than k={k}")
    if len(np.unique(y)) < 2:
        raise DegenerateFitError("dataset holds a single class")
    folds = stratified_folds(y, k, seed)
    results, confusion, classes, _ = cross_validate(X, y, spec, folds, names, dataset.participants,
                                                    jobs=jobs)
    importances = []
    if spec.family in TREE_FAMILIES and top > 0:
        importances = feature_importance(fit(X, y, spec, names))[:top]
    ends = [i.end_timestamp for i in dataset.instances]
    return ExperimentReport(
        site=dataset.site, slot=dataset.slot, family=spec.family, arm=arm, spec=spec.to_dict(),
        k=k, seed=seed, classes=classes.tolist(), folds=results, confusion=confusion.tolist(),
        importances=importances, sparse_classes=folds.sparse_classes,
        time_range=(min(ends), max(ends)), schema_hash=dataset.schema_hash(),
    )


# -- result tables -----------------------------------------------------------

@dataclass
class ResultTable:
    site: str
    slot: str
    families: list[str]
    arms: list[str]
    cells: dict[tuple[str, str], float]

    def percent(self, family: str, arm: str) -> str:
        v = self.cells.get((family, arm))
        return "" if v is None else f"{100.0 * v:.2f}"

    def csv_rows(self) -> list[list[str]]:
        return [["classifier", *self.arms]] + [
            [fam, *(self.percent(fam, a) for a in self.arms)] for fam in self.families]

    def to_text(self) -> str:
        rows = self.csv_rows()
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        title = f"Concentration prediction accuracy (%) - {self.site}: {self.slot}"
        lines = [title, ""]
        for j, r in enumerate(rows):
            cells = [r[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(r[1:], widths[1:])]
            lines.append("  ".join(cells).rstrip())
            if j == 0:
                lines.append("  ".join("-" * w for w in widths))
        return "\n".join(lines) + "\n"


def report_matrix(reports: Sequence[ExperimentReport]) -> ResultTable:
    """Rows are classifier families in canonical order, columns the feature arms."""
    if not reports:
        raise ContractError("no reports to tabulate")
    keys = {(r.site, r.slot) for r in reports}
    if len(keys) > 1:
        raise ContractError(f"reports mix site/slot combinations: {sorted(keys)}")
    site, slot = keys.pop()
    families = [f for f in FAMILIES if any(r.family == f for r in reports)]
    arms = [a for a in ARMS if any(r.arm == a for r in reports)]
    cells = {(r.family, r.arm): r.mean_accuracy for r in reports}
    return ResultTable(site, slot, families, arms, cells)


def result_paths(out_dir: str | Path, site: str, slot: str) -> dict[str, Path]:
    out_dir = Path(out_dir)
    stem = f"{site}_{slot}"
    return {
        "csv": out_dir / f"{stem}_results.csv",
        "txt": out_dir / f"{stem}_results.txt",
        "importance": out_dir / f"{stem}_importance.csv",
        "reports": out_dir / f"{stem}_reports.json",
        "manifest": out_dir / f"{stem}_run_manifest.json",
    }


def write_reports(reports: Sequence[ExperimentReport], out_dir: str | Path,
                  run_manifest: dict | None = None) -> dict[str, Path]:
    table = report_matrix(reports)
    paths = result_paths(out_dir, table.site, table.slot)
    paths["csv"].parent.mkdir(parents=True, exist_ok=True)
    with open(paths["csv"], "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(table.csv_rows())
    paths["txt"].write_text(table.to_text())
    with open(paths["importance"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["classifier", "arm", "rank", "feature", "weight"])
        for r in sorted(reports, key=_report_key):
            for rank, (name, w) in enumerate(r.importances, 1):
                writer.writerow([r.family, r.arm, rank, name, repr(w)])
    doc = [r.to_dict() for r in sorted(reports, key=_report_key)]
    paths["reports"].write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    if run_manifest is not None:
        paths["manifest"].write_text(json.dumps(run_manifest, indent=1, sort_keys=True) + "\n")
    return paths


def _report_key(r: ExperimentReport):
    return (FAMILIES.index(r.family), ARMS.index(r.arm))
