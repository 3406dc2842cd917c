"""L2-regularized logistic regression trained by full-batch gradient
descent on z-scored features; the standardization statistics travel with
the model."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import FitError


def _sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    expz = np.exp(z[~pos])
    out[~pos] = expz / (1.0 + expz)
    return out


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    loss_history: list = field(default_factory=list)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.feature_mean = np.asarray(self.feature_mean, dtype=np.float64)
        self.feature_std = np.asarray(self.feature_std, dtype=np.float64)
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.bias):
            raise ValueError("model parameters must be finite")

    def predict_proba(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        z = (X - self.feature_mean) / self.feature_std @ self.weights + self.bias
        return _sigmoid(z)

    def to_dict(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "bias": float(self.bias),
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LogisticModel":
        return cls(
            weights=np.array(data["weights"], dtype=np.float64),
            bias=float(data["bias"]),
            feature_mean=np.array(data["feature_mean"], dtype=np.float64),
            feature_std=np.array(data["feature_std"], dtype=np.float64),
        )


def loss_and_gradient(weights, bias, X, y, l2=0.0, pos_weight=1.0):
    """Weighted binary cross-entropy with L2 on the weights (not the bias).

    Returns (loss, grad_weights, grad_bias); used both by training and by
    the finite-difference gradient check.
    """
    z = X @ weights + bias
    y = np.asarray(y, dtype=np.float64)
    sample_weight = np.where(y > 0.5, pos_weight, 1.0)
    # -log sigmoid(z) = logaddexp(0, -z), stable in both tails
    per_sample = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
    loss = float(np.mean(sample_weight * per_sample) + 0.5 * l2 * np.dot(weights, weights))
    residual = sample_weight * (_sigmoid(z) - y) / len(y)
    grad_w = X.T @ residual + l2 * weights
    grad_b = float(np.sum(residual))
    return loss, grad_w, grad_b


def train_logistic(X, y, config) -> LogisticModel:
    """Full-batch gradient descent; deterministic given the config.

    Raises FitError when only one class is present.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise FitError("logistic regression needs both classes in the training data")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    Xs = (X - mean) / std
    n_pos = float(y.sum())
    pos_weight = config.class_weight
    if pos_weight is None:
        pos_weight = (len(y) - n_pos) / n_pos
    weights = np.zeros(X.shape[1])
    bias = 0.0
    history = []
    for _ in range(config.epochs):
        loss, grad_w, grad_b = loss_and_gradient(weights, bias, Xs, y, config.l2, pos_weight)
        history.append(loss)
        weights = weights - config.learning_rate * grad_w
        bias = bias - config.learning_rate * grad_b
    final_loss, _, _ = loss_and_gradient(weights, bias, Xs, y, config.l2, pos_weight)
    history.append(final_loss)
    return LogisticModel(
        weights=weights,
        bias=bias,
        feature_mean=mean,
        feature_std=std,
        loss_history=history,
    )
