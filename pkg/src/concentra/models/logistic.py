from __future__ import annotations

import numpy as np

from concentra.models.base import Classifier, Standardizer
from concentra.models.ensemble import softmax


def loss_and_grad(W: np.ndarray, b: np.ndarray, X: np.ndarray, Y: np.ndarray, l2: float):
    """Mean multinomial cross-entropy plus ``l2/2 * ||W||^2`` and its gradient.

    Returns ``(loss, dW, db)``; the bias is not regularised.
    """
    n = len(X)
    F = X @ W + b
    Z = F - F.max(axis=1, keepdims=True)
    logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
    loss = -(Y * logp).sum() / n + 0.5 * l2 * (W * W).sum()
    G = (np.exp(logp) - Y) / n
    return loss, X.T @ G + l2 * W, G.sum(axis=0)


class LogisticRegression(Classifier):
    """Softmax regression trained by full-batch gradient descent on standardized features."""

    family = "logistic_regression"

    def _fit(self, X, y_idx):
        p = self.params
        self.scaler_ = Standardizer().fit(X)
        Z = self.scaler_.transform(X)
        K = len(self.classes_)
        Y = np.zeros((len(Z), K))
        Y[np.arange(len(Z)), y_idx] = 1.0
        W = np.zeros((Z.shape[1], K))
        b = np.zeros(K)
        lr, l2 = float(p["learning_rate"]), float(p["l2"])
        self.loss_curve_ = []
        for _ in range(p["epochs"]):
            loss, dW, db = loss_and_grad(W, b, Z, Y, l2)
            self.loss_curve_.append(float(loss))
            W -= lr * dW
            b -= lr * db
        self.coef_, self.intercept_ = W, b

    def predict_proba(self, X) -> np.ndarray:
        X = self._prepare_predict(X)
        return softmax(self.scaler_.transform(X) @ self.coef_ + self.intercept_)

    def _predict_index(self, X):
        return np.argmax(self.scaler_.transform(X) @ self.coef_ + self.intercept_, axis=1)

    def _state(self):
        return {"mean": self.scaler_.mean_.tolist(), "scale": self.scaler_.scale_.tolist(),
                "coef": self.coef_.tolist(), "intercept": self.intercept_.tolist()}

    def _load_state(self, state):
        self.scaler_ = Standardizer()
        self.scaler_.mean_ = np.asarray(state["mean"], dtype=np.float64)
        self.scaler_.scale_ = np.asarray(state["scale"], dtype=np.float64)
        self.coef_ = np.asarray(state["coef"], dtype=np.float64).reshape(len(self.scaler_.mean_), -1)
        self.intercept_ = np.asarray(state["intercept"], dtype=np.float64)
