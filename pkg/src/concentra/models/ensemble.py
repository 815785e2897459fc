from __future__ import annotations

import numpy as np

from concentra.models.base import Classifier, resolve_max_features
from concentra.models.tree import Tree, grow_tree, one_hot, presort


class RandomForest(Classifier):
    """Bagged Gini trees with per-split feature subsampling; majority vote."""

    family = "random_forest"

    def _fit(self, X, y_idx):
        p = self.params
        n, d = X.shape
        K = len(self.classes_)
        Y = one_hot(y_idx, K)
        order = presort(X)
        mf = resolve_max_features(p["max_features"], d)
        rng = np.random.default_rng(self.spec.seed)
        self.trees_ = []
        for _ in range(p["n_estimators"]):
            if p["bootstrap"]:
                weights = np.bincount(rng.integers(0, n, n), minlength=n).astype(np.float64)
            else:
                weights = None
            tree_seed = int(rng.integers(0, 2**31 - 1))
            self.trees_.append(grow_tree(X, Y, weights=weights, order=order, max_depth=p["max_depth"],
                                         min_samples_split=p["min_samples_split"],
                                         max_features=mf, seed=tree_seed))

    def votes(self, X) -> np.ndarray:
        K = len(self.classes_)
        counts = np.zeros((len(X), K), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees_:
            counts[rows, np.argmax(tree.predict_value(X), axis=1)] += 1
        return counts

    def _predict_index(self, X):
        return np.argmax(self.votes(X), axis=1)

    def raw_importance(self) -> np.ndarray:
        return sum(t.importance(self.n_features_) for t in self.trees_)

    def _state(self):
        return {"trees": [t.to_dict() for t in self.trees_]}

    def _load_state(self, state):
        self.trees_ = [Tree.from_dict(t) for t in state["trees"]]


def softmax(F: np.ndarray) -> np.ndarray:
    Z = F - F.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def log_loss(F: np.ndarray, y_idx: np.ndarray) -> float:
    Z = F - F.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    return float(-logp[np.arange(len(y_idx)), y_idx].mean())


def _newton_leaves(tree: Tree, X: np.ndarray, r: np.ndarray, n_classes: int) -> None:
    leaves = tree.apply(X)
    num = np.bincount(leaves, weights=r, minlength=tree.n_nodes)
    den = np.bincount(leaves, weights=np.abs(r) * (1.0 - np.abs(r)), minlength=tree.n_nodes)
    step = np.zeros(tree.n_nodes)
    ok = den > 1e-12
    step[ok] = (n_classes - 1) / n_classes * num[ok] / den[ok]
    used = np.unique(leaves)
    value = tree.value.copy()
    value[used, 0] = step[used]
    tree.value = value


class GradientBoosting(Classifier):
    """Multiclass boosting on the softmax cross-entropy.

    Each round fits one regression tree per class to that class's negative
    gradient ``y_k - p_k`` (all classes against the same probabilities). Each
    leaf then takes one Newton step, ``(K-1)/K * sum(r) / sum(|r|(1-|r|))``,
    and is added with shrinkage. Scores start at the log class priors.
    """

    family = "gradient_boosting"

    def _fit(self, X, y_idx):
        p = self.params
        K = len(self.classes_)
        Y = one_hot(y_idx, K)
        order = presort(X)
        prior = Y.mean(axis=0)
        self.init_ = np.log(prior)
        F = np.tile(self.init_, (len(X), 1))
        lr = float(p["learning_rate"])
        self.trees_: list[list[Tree]] = []
        self.train_loss_ = [log_loss(F, y_idx)]
        for _ in range(p["n_estimators"]):
            P = softmax(F)
            round_trees = []
            for k in range(K):
                r = Y[:, k] - P[:, k]
                tree = grow_tree(X, r, order=order, max_depth=p["max_depth"],
                                 min_samples_split=p["min_samples_split"])
                _newton_leaves(tree, X, r, K)
                round_trees.append(tree)
            for k, tree in enumerate(round_trees):
                F[:, k] += lr * tree.predict_value(X)[:, 0]
            self.trees_.append(round_trees)
            self.train_loss_.append(log_loss(F, y_idx))

    def decision_function(self, X) -> np.ndarray:
        lr = float(self.params["learning_rate"])
        F = np.tile(self.init_, (len(X), 1))
        for round_trees in self.trees_:
            for k, tree in enumerate(round_trees):
                F[:, k] += lr * tree.predict_value(X)[:, 0]
        return F

    def _predict_index(self, X):
        return np.argmax(self.decision_function(X), axis=1)

    def raw_importance(self) -> np.ndarray:
        return sum(t.importance(self.n_features_) for r in self.trees_ for t in r)

    def _state(self):
        return {"init": self.init_.tolist(), "train_loss": self.train_loss_,
                "trees": [[t.to_dict() for t in r] for r in self.trees_]}

    def _load_state(self, state):
        self.init_ = np.asarray(state["init"], dtype=np.float64)
        self.train_loss_ = list(state["train_loss"])
        self.trees_ = [[Tree.from_dict(t) for t in r] for r in state["trees"]]
