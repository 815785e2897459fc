"""Classifier suite with a uniform fit/predict contract."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from concentra.errors import ContractError, UnsupportedOperationError
from concentra.models.base import (
    DEFAULTS,
    FAMILIES,
    TREE_FAMILIES,
    Classifier,
    ClassifierSpec,
    Standardizer,
)
from concentra.models.ensemble import GradientBoosting, RandomForest
from concentra.models.knn import KNearestNeighbors
from concentra.models.logistic import LogisticRegression, loss_and_grad
from concentra.models.naive_bayes import GaussianNB
from concentra.models.tree import DecisionTree

FORMAT_VERSION = 1

REGISTRY: dict[str, type[Classifier]] = {
    cls.family: cls
    for cls in (GaussianNB, KNearestNeighbors, LogisticRegression, DecisionTree,
                RandomForest, GradientBoosting)
}


def make_model(spec: ClassifierSpec) -> Classifier:
    return REGISTRY[spec.family](spec)


def fit(X, y, spec: ClassifierSpec, feature_names: Sequence[str] | None = None) -> Classifier:
    return make_model(spec).fit(X, y, feature_names)


def predict(model: Classifier, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
    return model.predict(X, feature_names)


def feature_importance(model: Classifier) -> list[tuple[str, float]]:
    """Impurity-decrease importance, normalised to sum to one, highest first.

    Ties keep manifest order. A model that never split reports all zeros.
    """
    if model.family not in TREE_FAMILIES:
        raise UnsupportedOperationError(f"{model.family} has no impurity-based importance")
    raw = np.asarray(model.raw_importance(), dtype=np.float64)
    total = raw.sum()
    weights = raw / total if total > 0 else np.zeros_like(raw)
    names = model.feature_names or tuple(f"f{i}" for i in range(len(raw)))
    order = sorted(range(len(raw)), key=lambda i: (-weights[i], i))
    return [(names[i], float(weights[i])) for i in order]


def save_model(model: Classifier, path: str | Path) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "family": model.family,
        "spec": model.spec.to_dict(),
        "feature_names": list(model.feature_names) if model.feature_names else None,
        "classes": model.classes_.tolist(),
        "n_features": model.n_features_,
        "state": model._state(),
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> Classifier:
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ContractError(f"unsupported model format version {doc.get('format_version')!r}")
    spec = ClassifierSpec(**doc["spec"])
    model = make_model(spec)
    model.feature_names = tuple(doc["feature_names"]) if doc["feature_names"] else None
    model.classes_ = np.asarray(doc["classes"])
    model.n_features_ = int(doc["n_features"])
    model._load_state(doc["state"])
    return model


__all__ = [
    "DEFAULTS", "FAMILIES", "TREE_FAMILIES", "Classifier", "ClassifierSpec", "Standardizer",
    "GaussianNB", "KNearestNeighbors", "LogisticRegression", "DecisionTree", "RandomForest",
    "GradientBoosting", "make_model", "fit", "predict", "feature_importance", "save_model",
    "load_model", "loss_and_grad",
]
