"""Density-based clustering over a full matrix (transductive, no scoring)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DimensionError

NOISE = -1


@dataclass
class DbscanResult:
    labels: np.ndarray  # (n,) cluster ids, -1 for noise
    n_clusters: int
    n_noise: int
    core_mask: np.ndarray


def _neighbor_lists(X: np.ndarray, eps: float) -> list[np.ndarray]:
    n = X.shape[0]
    sq = (X * X).sum(axis=1)
    eps2 = eps * eps
    out: list[np.ndarray] = []
    chunk = max(1, int(2**22 // max(n, 1)))
    for start in range(0, n, chunk):
        stop = min(start + chunk, n)
        d2 = sq[start:stop, None] - 2.0 * X[start:stop] @ X.T + sq[None, :]
        np.maximum(d2, 0.0, out=d2)
        for i in range(stop - start):
            out.append(np.flatnonzero(d2[i] <= eps2))
    return out


def dbscan(X: np.ndarray, eps: float = 0.3, min_pts: int = 10) -> DbscanResult:
    """Euclidean epsilon-neighborhood clustering.

    A core point has at least ``min_pts`` neighbors within ``eps``, itself
    included; clusters are grown from core points in row order, so labels are
    deterministic for a fixed row order. Border points attach to the first
    cluster that reaches them; unreachable points are labelled -1.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("dbscan needs a non-empty 2-D matrix")
    if not np.isfinite(X).all():
        raise ValueError("dbscan input must be finite")
    if eps <= 0:
        raise ConfigurationError(f"eps must be > 0, got {eps}")
    if min_pts < 1:
        raise ConfigurationError(f"min_pts must be >= 1, got {min_pts}")

    n = X.shape[0]
    neighbors = _neighbor_lists(X, eps)
    core = np.array([len(nb) >= min_pts for nb in neighbors])
    labels = np.full(n, NOISE, dtype=np.int64)

    cluster = 0
    for i in range(n):
        if labels[i] != NOISE or not core[i]:
            continue
        labels[i] = cluster
        stack = [i]
        while stack:
            j = stack.pop()
            for q in neighbors[j]:
                if labels[q] == NOISE:
                    labels[q] = cluster
                    if core[q]:
                        stack.append(q)
        cluster += 1

    return DbscanResult(labels, cluster, int((labels == NOISE).sum()), core)
