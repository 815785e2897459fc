from __future__ import annotations

import numpy as np

from concentra.models.base import Classifier


class GaussianNB(Classifier):
    """Per-class independent Gaussians scored by log-likelihood plus log prior."""

    family = "gaussian_nb"

    def _fit(self, X, y_idx):
        K = len(self.classes_)
        floor = float(self.params["var_floor"])
        self.theta_ = np.empty((K, X.shape[1]))
        self.var_ = np.empty((K, X.shape[1]))
        counts = np.bincount(y_idx, minlength=K)
        for k in range(K):
            Xk = X[y_idx == k]
            self.theta_[k] = Xk.mean(axis=0)
            self.var_[k] = np.maximum(Xk.var(axis=0), floor)
        self.log_prior_ = np.log(counts / counts.sum())

    def joint_log_likelihood(self, X) -> np.ndarray:
        out = np.empty((len(X), len(self.classes_)))
        for k in range(len(self.classes_)):
            ll = -0.5 * (np.log(2.0 * np.pi * self.var_[k]) + (X - self.theta_[k]) ** 2 / self.var_[k])
            out[:, k] = self.log_prior_[k] + ll.sum(axis=1)
        return out

    def _predict_index(self, X):
        return np.argmax(self.joint_log_likelihood(X), axis=1)

    def _state(self):
        return {"theta": self.theta_.tolist(), "var": self.var_.tolist(),
                "log_prior": self.log_prior_.tolist()}

    def _load_state(self, state):
        self.theta_ = np.asarray(state["theta"], dtype=np.float64)
        self.var_ = np.asarray(state["var"], dtype=np.float64)
        self.log_prior_ = np.asarray(state["log_prior"], dtype=np.float64)
