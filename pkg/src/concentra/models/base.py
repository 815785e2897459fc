from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from concentra.errors import ContractError, DegenerateFitError, ParameterError

FAMILIES = (
    "gaussian_nb",
    "knn",
    "logistic_regression",
    "decision_tree",
    "random_forest",
    "gradient_boosting",
)
TREE_FAMILIES = ("decision_tree", "random_forest", "gradient_boosting")

DEFAULTS: dict[str, dict[str, Any]] = {
    "gaussian_nb": {"var_floor": 1e-9},
    "knn": {"k": 10},
    "logistic_regression": {"learning_rate": 0.1, "epochs": 500, "l2": 1e-4},
    "decision_tree": {"max_depth": 10, "min_samples_split": 10, "max_features": None},
    "random_forest": {"n_estimators": 100, "max_depth": 5, "min_samples_split": 2,
                      "max_features": "sqrt", "bootstrap": True},
    "gradient_boosting": {"n_estimators": 100, "max_depth": 5, "min_samples_split": 2,
                          "learning_rate": 0.1},
}


@dataclass(frozen=True)
class ClassifierSpec:
    family: str
    hyperparameters: dict[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ParameterError(f"unknown classifier family {self.family!r}")
        unknown = set(self.hyperparameters) - set(DEFAULTS[self.family])
        if unknown:
            raise ParameterError(f"{self.family}: unknown hyperparameters {sorted(unknown)}")
        p = self.params
        checks = {
            "k": lambda v: isinstance(v, int) and v >= 1,
            "max_depth": lambda v: isinstance(v, int) and v >= 1,
            "n_estimators": lambda v: isinstance(v, int) and v >= 1,
            "min_samples_split": lambda v: isinstance(v, int) and v >= 2,
            "learning_rate": lambda v: v > 0,
            "epochs": lambda v: isinstance(v, int) and v >= 1,
            "l2": lambda v: v >= 0,
            "var_floor": lambda v: v > 0,
        }
        for name, ok in checks.items():
            if name in p and not ok(p[name]):
                raise ParameterError(f"{self.family}: invalid {name}={p[name]!r}")

    @property
    def params(self) -> dict[str, Any]:
        return {**DEFAULTS[self.family], **self.hyperparameters}

    def to_dict(self) -> dict:
        return {"family": self.family, "hyperparameters": dict(self.hyperparameters), "seed": self.seed}


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None or max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, int(math.sqrt(n_features)))
    if max_features == "log2":
        return max(1, int(math.log2(n_features)))
    if isinstance(max_features, float):
        return max(1, min(n_features, int(max_features * n_features)))
    if isinstance(max_features, int) and max_features >= 1:
        return min(n_features, max_features)
    raise ParameterError(f"invalid max_features {max_features!r}")


class Standardizer:
    """Column-wise z-scoring; constant columns keep unit scale."""

    def fit(self, X: np.ndarray) -> "Standardizer":
        self.mean_ = X.mean(axis=0)
        scale = X.std(axis=0)
        self.scale_ = np.where(scale > 0, scale, 1.0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean_) / self.scale_


class Classifier:
    """Uniform fit/predict contract shared by every family.

    Labels are arbitrary integers; internally classes are indexed in
    ascending label order so that ``argmax`` ties resolve to the smallest
    label.
    """

    family: str = ""

    def __init__(self, spec: ClassifierSpec | None = None):
        self.spec = spec or ClassifierSpec(self.family)
        self.params = self.spec.params
        self.feature_names: tuple[str, ...] | None = None
        self.classes_: np.ndarray | None = None

    # -- contract checks -------------------------------------------------
    def _prepare_fit(self, X, y, feature_names):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y):
            raise ContractError("X must be 2-D with one label per row")
        if not np.isfinite(X).all():
            raise ContractError("training features must be finite")
        if feature_names is not None and len(feature_names) != X.shape[1]:
            raise ContractError("feature manifest length does not match X")
        classes, y_idx = np.unique(y, return_inverse=True)
        if len(classes) < 2:
            raise DegenerateFitError(f"need at least two distinct labels, got {classes.tolist()}")
        self.classes_ = classes
        self.feature_names = tuple(feature_names) if feature_names is not None else None
        self.n_features_ = X.shape[1]
        return np.ascontiguousarray(X), y_idx

    def _prepare_predict(self, X, feature_names=None):
        if self.classes_ is None:
            raise ContractError("model is not fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features_:
            raise ContractError(f"expected {self.n_features_} features, got {X.shape[1]}")
        if feature_names is not None and self.feature_names is not None \
                and tuple(feature_names) != self.feature_names:
            raise ContractError("feature manifest mismatch")
        if not np.isfinite(X).all():
            raise ContractError("features must be finite")
        return np.ascontiguousarray(X)

    # -- public API --------------------------------------------------------
    def fit(self, X, y, feature_names: Sequence[str] | None = None) -> "Classifier":
        X, y_idx = self._prepare_fit(X, y, feature_names)
        self._fit(X, y_idx)
        return self

    def predict(self, X, feature_names: Sequence[str] | None = None) -> np.ndarray:
        X = self._prepare_predict(X, feature_names)
        return self.classes_[self._predict_index(X)]

    def predict_row(self, features: dict[str, float]):
        """Predict one feature mapping (e.g. ``FeatureVector.features`` merged for A+P)."""
        if self.feature_names is None:
            raise ContractError("model has no feature manifest")
        try:
            row = [features[n] for n in self.feature_names]
        except KeyError as exc:
            raise ContractError(f"feature {exc.args[0]!r} missing") from None
        return self.predict(np.array([row]))[0]

    def _fit(self, X, y_idx):
        raise NotImplementedError

    def _predict_index(self, X) -> np.ndarray:
        raise NotImplementedError

    # -- serialisation hooks ---------------------------------------------
    def _state(self) -> dict:
        raise NotImplementedError

    def _load_state(self, state: dict) -> None:
        raise NotImplementedError
