"""Lloyd's algorithm with seeded data-point initialization."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError, TrainingError
from .scaling import ScalerParams, apply_scaler, fit_scaler


@dataclass
class KMeansModel:
    centroids: np.ndarray  # (k, c), in scaled space when a scaler is attached
    scaler: ScalerParams | None
    seed: int
    n_iter: int
    sse_trace: list[float] = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]


def _distances_sq(X: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d2 = (
        (X * X).sum(axis=1)[:, None]
        - 2.0 * X @ centroids.T
        + (centroids * centroids).sum(axis=1)[None, :]
    )
    return np.maximum(d2, 0.0)


def kmeans_fit(
    X: np.ndarray, k: int = 2, seed: int = 0, max_iter: int = 300, standardize: bool = True
) -> KMeansModel:
    """Cluster rows of X; iterates until the assignment fixpoint or max_iter.

    Initial centroids are k distinct rows drawn with the seeded generator.
    Distances are Euclidean, by default on standardized columns. Empty
    clusters keep their previous centroid so the SSE trace never increases.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("kmeans needs a non-empty 2-D matrix")
    n = X.shape[0]
    if k < 1 or k > n:
        raise TrainingError(f"k={k} is not in [1, {n}]")

    scaler = fit_scaler(X, "standardize_only") if standardize else None
    Xs = apply_scaler(scaler, X) if scaler is not None else X

    rng = np.random.default_rng(seed)
    centroids = Xs[rng.choice(n, size=k, replace=False)].copy()
    labels = None
    trace: list[float] = []
    it = 0
    for it in range(1, max_iter + 1):
        d2 = _distances_sq(Xs, centroids)
        new_labels = d2.argmin(axis=1)
        trace.append(float(d2[np.arange(n), new_labels].sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = Xs[members].mean(axis=0)
    return KMeansModel(centroids, scaler, seed, it, trace)


def kmeans_assign(model: KMeansModel, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-centroid labels plus a distance margin usable as a ranking score.

    For k=2 the margin is the signed difference d(c0) - d(c1); for larger k
    it is the gap between the two nearest centroids.
    """
    X = np.asarray(X, dtype=np.float64)
    Xs = apply_scaler(model.scaler, X) if model.scaler is not None else X
    d = np.sqrt(_distances_sq(Xs, model.centroids))
    labels = d.argmin(axis=1)
    if model.k == 2:
        margins = d[:, 0] - d[:, 1]
    elif model.k == 1:
        margins = d[:, 0]
    else:
        part = np.sort(d, axis=1)
        margins = part[:, 1] - part[:, 0]
    return labels, margins
