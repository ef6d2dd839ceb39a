"""L2-regularized logistic regression trained with full-batch gradient descent."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, TrainingError
from .scaling import ScalerParams, apply_scaler, fit_scaler


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


@dataclass
class LogRegModel:
    weights: np.ndarray
    bias: float
    scaler: ScalerParams
    l2: float
    loss_trace: list[float] = field(default_factory=list)


def logreg_fit(
    X: np.ndarray, y: np.ndarray, l2: float = 1e-3, epochs: int = 300, lr: float = 0.1
) -> LogRegModel:
    """Fit on min-max-then-standardized features; weights start at zero.

    The bias is left unregularized. The recorded trace is the regularized
    objective, which gradient descent drives down monotonically for sane
    learning rates.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError("X and y disagree on the number of rows")
    if np.unique(y).size < 2:
        raise TrainingError("logistic regression needs both classes present")

    scaler = fit_scaler(X, "minmax_then_standardize")
    Xs = apply_scaler(scaler, X)
    n, c = Xs.shape
    w = np.zeros(c)
    b = 0.0
    trace = []
    for _ in range(epochs):
        z = Xs @ w + b
        p = _sigmoid(z)
        trace.append(
            float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w))
        )
        resid = (p - y) / n
        w -= lr * (Xs.T @ resid + l2 * w)
        b -= lr * float(resid.sum())
    z = Xs @ w + b
    trace.append(float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * float(w @ w)))
    return LogRegModel(w, b, scaler, l2, trace)


def logreg_score(model: LogRegModel, X: np.ndarray) -> np.ndarray:
    """Probability of the positive class, inside the open interval (0, 1)."""
    Xs = apply_scaler(model.scaler, np.asarray(X, dtype=np.float64))
    p = _sigmoid(Xs @ model.weights + model.bias)
    return np.clip(p, 1e-15, 1.0 - 1e-15)
