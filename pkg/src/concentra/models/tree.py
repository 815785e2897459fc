"""Exact-greedy binary trees with axis-aligned splits.

One builder serves classification (Gini, one-hot targets) and regression
(variance, real targets): for weighted target sums ``S`` and weight ``W`` both
criteria reduce to maximising ``|S_L|^2/W_L + |S_R|^2/W_R``, and the impurity
decrease ``W*imp - W_L*imp_L - W_R*imp_R`` equals that quantity minus
``|S|^2/W``. Candidate thresholds are midpoints between consecutive distinct
sorted values; a sample goes left when ``x <= threshold``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np

from concentra.models.base import Classifier, resolve_max_features

LEAF = -1


@nb.njit(cache=True, nogil=True)
def _grow(X, order0, w, T, max_depth, min_samples_split, max_features, seed):
    n, d = X.shape
    C = T.shape[1]
    np.random.seed(seed)

    m = 0
    for i in range(n):
        if w[i] > 0:
            m += 1
    order = np.empty((d, m), dtype=np.int64)
    for f in range(d):
        k = 0
        for i in range(n):
            s = order0[f, i]
            if w[s] > 0:
                order[f, k] = s
                k += 1

    cap = 2 * m - 1
    if max_depth < 30:
        cap = min(cap, 2 ** (max_depth + 1) - 1)
    cap = max(cap, 1)
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros((cap, C))
    gain = np.zeros(cap)
    weight = np.zeros(cap)

    st_start = np.empty(cap, dtype=np.int64)
    st_end = np.empty(cap, dtype=np.int64)
    st_depth = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    top = 0
    st_start[0], st_end[0], st_depth[0], st_node[0] = 0, m, 0, 0
    top = 1
    n_nodes = 1

    goes_left = np.zeros(n, dtype=np.bool_)
    tmp = np.empty(m, dtype=np.int64)
    feats = np.arange(d)
    S = np.zeros(C)
    SL = np.zeros(C)

    while top > 0:
        top -= 1
        start, end, depth, node = st_start[top], st_end[top], st_depth[top], st_node[top]

        W = 0.0
        Q = 0.0
        S[:] = 0.0
        for i in range(start, end):
            s = order[0, i]
            ws = w[s]
            W += ws
            for c in range(C):
                S[c] += ws * T[s, c]
                Q += ws * T[s, c] * T[s, c]
        base = 0.0
        for c in range(C):
            value[node, c] = S[c] / W
            base += S[c] * S[c]
        base /= W
        weight[node] = W
        imp = Q - base
        if depth >= max_depth or end - start < min_samples_split or imp <= 1e-12 * Q:
            continue

        if max_features < d:
            for j in range(max_features):
                r = j + np.random.randint(0, d - j)
                t = feats[j]
                feats[j] = feats[r]
                feats[r] = t
            cand = np.sort(feats[:max_features])
        else:
            cand = feats

        best = 1e-10 * imp
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for f in cand:
            WL = 0.0
            SL[:] = 0.0
            for i in range(start, end - 1):
                s = order[f, i]
                ws = w[s]
                WL += ws
                for c in range(C):
                    SL[c] += ws * T[s, c]
                x0 = X[s, f]
                x1 = X[order[f, i + 1], f]
                if x1 > x0:
                    WR = W - WL
                    sl = 0.0
                    sr = 0.0
                    for c in range(C):
                        sl += SL[c] * SL[c]
                        r_ = S[c] - SL[c]
                        sr += r_ * r_
                    g = sl / WL + sr / WR - base
                    if g > best:
                        best = g
                        best_f = f
                        best_pos = i
                        thr = 0.5 * x0 + 0.5 * x1
                        if thr >= x1 or thr < x0:
                            thr = x0
                        best_thr = thr
        if best_f < 0:
            continue

        for i in range(start, end):
            goes_left[order[best_f, i]] = i <= best_pos
        n_left = best_pos - start + 1
        for f in range(d):
            a = start
            b = 0
            for i in range(start, end):
                s = order[f, i]
                if goes_left[s]:
                    order[f, a] = s
                    a += 1
                else:
                    tmp[b] = s
                    b += 1
            for i in range(b):
                order[f, a + i] = tmp[i]

        feature[node] = best_f
        threshold[node] = best_thr
        gain[node] = best
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        mid = start + n_left
        st_start[top], st_end[top], st_depth[top], st_node[top] = mid, end, depth + 1, rc
        top += 1
        st_start[top], st_end[top], st_depth[top], st_node[top] = start, mid, depth + 1, lc
        top += 1

    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes],
            value[:n_nodes], gain[:n_nodes], weight[:n_nodes])


@nb.njit(cache=True, nogil=True)
def _apply(X, feature, threshold, left, right):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


def presort(X: np.ndarray) -> np.ndarray:
    """Per-feature ascending sample order, shape (n_features, n_samples)."""
    return np.ascontiguousarray(np.argsort(X, axis=0, kind="stable").T)


@dataclass
class Tree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def predict_value(self, X: np.ndarray) -> np.ndarray:
        return self.value[self.apply(X)]

    def importance(self, n_features: int) -> np.ndarray:
        """Raw (unnormalised) impurity decrease per feature."""
        internal = self.left != LEAF
        return np.bincount(self.feature[internal], weights=self.gain[internal], minlength=n_features)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("feature", "threshold", "left", "right", "value", "gain", "weight")}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        ints = ("feature", "left", "right")
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else np.float64)
                      for k, v in d.items()})


def grow_tree(X: np.ndarray, targets: np.ndarray, *, weights=None, order=None,
              max_depth: int = 10, min_samples_split: int = 2, max_features: int | None = None,
              seed: int = 0) -> Tree:
    """Fit one tree. ``targets`` is one-hot for Gini trees, one column for regression."""
    X = np.ascontiguousarray(X, dtype=np.float64)
    T = np.ascontiguousarray(targets, dtype=np.float64)
    if T.ndim == 1:
        T = T[:, None]
    n, d = X.shape
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if order is None:
        order = presort(X)
    mf = d if max_features is None else int(max_features)
    return Tree(*_grow(X, order, w, T, int(max_depth), int(min_samples_split), mf, int(seed)))


def one_hot(y_idx: np.ndarray, n_classes: int) -> np.ndarray:
    Y = np.zeros((len(y_idx), n_classes))
    Y[np.arange(len(y_idx)), y_idx] = 1.0
    return Y


class DecisionTree(Classifier):
    """Gini classification tree."""

    family = "decision_tree"

    def _fit(self, X, y_idx):
        p = self.params
        mf = resolve_max_features(p["max_features"], X.shape[1])
        self.tree_ = grow_tree(X, one_hot(y_idx, len(self.classes_)), max_depth=p["max_depth"],
                               min_samples_split=p["min_samples_split"], max_features=mf,
                               seed=self.spec.seed)

    def _predict_index(self, X):
        return np.argmax(self.tree_.predict_value(X), axis=1)

    def raw_importance(self) -> np.ndarray:
        return self.tree_.importance(self.n_features_)

    def _state(self):
        return {"tree": self.tree_.to_dict()}

    def _load_state(self, state):
        self.tree_ = Tree.from_dict(state["tree"])
