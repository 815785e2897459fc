from __future__ import annotations

import numpy as np

from concentra.models.base import Classifier, Standardizer


class KNearestNeighbors(Classifier):
    """Majority vote of the k nearest standardized training points (Euclidean).

    Equidistant neighbours are taken in training order; vote ties go to the
    smallest label.
    """

    family = "knn"

    def _fit(self, X, y_idx):
        self.scaler_ = Standardizer().fit(X)
        self.X_ = self.scaler_.transform(X)
        self.y_ = y_idx

    def _predict_index(self, X, chunk: int = 32):
        Z = self.scaler_.transform(X)
        k = min(int(self.params["k"]), len(self.X_))
        K = len(self.classes_)
        out = np.empty(len(Z), dtype=np.int64)
        for lo in range(0, len(Z), chunk):
            block = Z[lo:lo + chunk]
            dist = ((block[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
            nearest = np.argsort(dist, axis=1, kind="stable")[:, :k]
            for i, idx in enumerate(nearest):
                out[lo + i] = np.argmax(np.bincount(self.y_[idx], minlength=K))
        return out

    def _state(self):
        return {"mean": self.scaler_.mean_.tolist(), "scale": self.scaler_.scale_.tolist(),
                "X": self.X_.tolist(), "y": self.y_.tolist()}

    def _load_state(self, state):
        self.scaler_ = Standardizer()
        self.scaler_.mean_ = np.asarray(state["mean"], dtype=np.float64)
        self.scaler_.scale_ = np.asarray(state["scale"], dtype=np.float64)
        self.X_ = np.asarray(state["X"], dtype=np.float64).reshape(-1, len(self.scaler_.mean_))
        self.y_ = np.asarray(state["y"], dtype=np.int64)
