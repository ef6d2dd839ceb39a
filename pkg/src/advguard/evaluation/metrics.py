"""Evaluation primitives: folds, mutual information, AUC, DP, clustering scores."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DimensionError, DomainError, TrainingError

MI_BINS = 16


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: np.ndarray  # fold index per row
    seed: int


def stratified_folds(labels, k: int = 10, seed: int = 0) -> FoldPlan:
    """Assign rows to k folds with per-class counts balanced within 1.

    Rows of each class are shuffled with the seeded generator and dealt
    round-robin, so the plan is deterministic per seed.
    """
    y = np.asarray(labels)
    if k < 2:
        raise TrainingError(f"fold count must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    assignments = np.empty(y.shape[0], dtype=np.int64)
    for cls in np.unique(y):
        idx = np.flatnonzero(y == cls)
        if idx.size < k:
            raise TrainingError(
                f"class {cls!r} has {idx.size} members, fewer than {k} folds"
            )
        rng.shuffle(idx)
        assignments[idx] = np.arange(idx.size) % k
    return FoldPlan(k, assignments, seed)


def mutual_information(column, labels, bins: int = MI_BINS) -> float:
    """Plug-in mutual information (nats) of an equal-frequency binned column.

    The column is cut at up to ``bins`` quantile edges (ties merged); MI is
    computed from the binned joint distribution with the binary labels.
    """
    col = np.asarray(column, dtype=np.float64)
    y = np.asarray(labels)
    if col.shape != y.shape or col.ndim != 1:
        raise DimensionError("column and labels must be equal-length vectors")
    if not np.isfinite(col).all():
        raise ValueError("column must be finite")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("labels are constant; mutual information is undefined")
    if classes.size > 2:
        raise TrainingError("labels must be binary")

    edges = np.unique(np.quantile(col, np.arange(1, bins) / bins))
    b = np.searchsorted(edges, col, side="right")
    y01 = (y == classes[1]).astype(np.int64)
    joint = np.bincount(b * 2 + y01, minlength=(b.max() + 1) * 2).reshape(-1, 2)
    n = float(col.size)
    pi = joint.sum(axis=1)
    pj = joint.sum(axis=0)
    mask = joint > 0
    cells = joint[mask].astype(np.float64)
    outer = (pi[:, None] * pj[None, :])[mask].astype(np.float64)
    mi = float(np.sum(cells / n * np.log(cells * n / outer)))
    return max(mi, 0.0)


def mi_per_column(X: np.ndarray, labels, bins: int = MI_BINS) -> np.ndarray:
    """Column-wise mutual information, vectorized over the matrix.

    Uses the same quantile partition as :func:`mutual_information`; empty
    bins cannot contribute, so skipping the tie-merge step leaves the value
    unchanged (up to summation order).
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError("matrix rows and labels disagree")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("labels are constant; mutual information is undefined")
    if classes.size > 2:
        raise TrainingError("labels must be binary")
    n, c = X.shape
    edges = np.quantile(X, np.arange(1, bins) / bins, axis=0)  # (bins-1, c)
    B = np.empty((n, c), dtype=np.int64)
    for j in range(c):
        B[:, j] = np.searchsorted(edges[:, j], X[:, j], side="right")
    y01 = (y == classes[1]).astype(np.int64)
    key = (np.arange(c)[None, :] * bins + B) * 2 + y01[:, None]
    joint = np.bincount(key.ravel(), minlength=c * bins * 2).reshape(c, bins, 2)
    pi = joint.sum(axis=2)  # (c, bins)
    pj = joint.sum(axis=1)  # (c, 2)
    jf = joint.astype(np.float64)
    outer = pi[:, :, None] * pj[:, None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, jf / n * np.log(jf * n / outer), 0.0)
    return np.maximum(terms.sum(axis=(1, 2)), 0.0)


def select_top_k(X_train: np.ndarray, y_train) -> np.ndarray:
    """Indices of the floor(sqrt(N_train)) highest-MI columns.

    Ties break toward the lower column index; K is capped at the column
    count. Only training rows may be passed here.
    """
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("selection needs a non-empty 2-D training matrix")
    k = min(math.isqrt(X.shape[0]), X.shape[1])
    k = max(k, 1)
    mi = mi_per_column(X, y_train)
    order = np.lexsort((np.arange(mi.size), -mi))
    return np.sort(order[:k])


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve via the rank-sum (Mann-Whitney) statistic.

    Ties contribute half weight through midranks, which is exactly the
    pair-counting definition (#concordant + 0.5 #tied) / (#pos * #neg).
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    if s.shape != y.shape or s.ndim != 1:
        raise DimensionError("scores and labels must be equal-length vectors")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = int(s.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise TrainingError("AUC needs both classes present")
    order = np.argsort(s, kind="mergesort")
    ss = s[order]
    group = np.cumsum(np.r_[True, ss[1:] != ss[:-1]]) - 1
    counts = np.bincount(group)
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    group_rank = starts + (counts + 1) / 2.0  # 1-based midranks
    ranks = np.empty(s.size)
    ranks[order] = group_rank[group]
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def dp_metric(auc: float) -> float:
    """Discriminative power: 2 * |0.5 - AUC|, in [0, 1] and symmetric at 0.5."""
    if not (0.0 <= auc <= 1.0):
        raise DomainError(f"auc must lie in [0, 1], got {auc}")
    return 2.0 * abs(0.5 - auc)


# ---------------------------------------------------------------------------
# clustering agreement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AgreementReport:
    homogeneity: float
    completeness: float
    v_measure: float
    adjusted_rand: float
    n_clusters: int
    n_noise: int


def v_measure(h: float, c: float) -> float:
    """Harmonic mean of homogeneity and completeness; 0 when both vanish."""
    if h + c == 0.0:
        return 0.0
    return 2.0 * h * c / (h + c)


def _entropy(counts: np.ndarray, n: float) -> float:
    nz = counts[counts > 0].astype(np.float64)
    return float(-np.sum(nz / n * np.log(nz / n)))


def cluster_agreement(pred_labels, true_labels) -> AgreementReport:
    """Entropy-based homogeneity/completeness/V plus the adjusted Rand index.

    Noise points (label -1) enter the metrics as one ordinary predicted
    label and are additionally reported as ``n_noise``; ``n_clusters``
    excludes them.
    """
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape or pred.ndim != 1:
        raise DimensionError("label vectors must be equal length")
    n = pred.size
    _, pi = np.unique(pred, return_inverse=True)
    _, ti = np.unique(true, return_inverse=True)
    n_pred = pi.max() + 1
    n_true = ti.max() + 1
    joint = np.bincount(pi * n_true + ti, minlength=n_pred * n_true).reshape(n_pred, n_true)

    a = joint.sum(axis=1)  # per predicted cluster
    b = joint.sum(axis=0)  # per true class
    h_true = _entropy(b, n)
    h_pred = _entropy(a, n)
    # conditional entropies from the joint
    nz = joint > 0
    jj = joint[nz].astype(np.float64)
    h_true_given_pred = float(-np.sum(jj / n * np.log(jj / a[:, None].repeat(n_true, 1)[nz])))
    h_pred_given_true = float(-np.sum(jj / n * np.log(jj / b[None, :].repeat(n_pred, 0)[nz])))
    homogeneity = 1.0 if h_true == 0 else 1.0 - h_true_given_pred / h_true
    completeness = 1.0 if h_pred == 0 else 1.0 - h_pred_given_true / h_pred

    def comb2(x):
        return x * (x - 1.0) / 2.0

    sum_ij = float(comb2(joint.astype(np.float64)).sum())
    sum_a = float(comb2(a.astype(np.float64)).sum())
    sum_b = float(comb2(b.astype(np.float64)).sum())
    total = comb2(float(n))
    expected = sum_a * sum_b / total if total > 0 else 0.0
    max_index = 0.5 * (sum_a + sum_b)
    if max_index == expected:
        ari = 1.0
    else:
        ari = (sum_ij - expected) / (max_index - expected)

    noise = int((pred == -1).sum())
    clusters = int(np.unique(pred[pred != -1]).size)
    return AgreementReport(
        homogeneity, completeness, v_measure(homogeneity, completeness), ari, clusters, noise
    )


def silhouette(X: np.ndarray, labels) -> float:
    """Mean silhouette coefficient over non-noise points.

    Needs at least two clusters after excluding noise; singleton clusters
    contribute 0 for their lone member.
    """
    X = np.asarray(X, dtype=np.float64)
    lab = np.asarray(labels)
    keep = lab != -1
    Xk = X[keep]
    lk = lab[keep]
    values, inv = np.unique(lk, return_inverse=True)
    k = values.size
    if k < 2:
        raise TrainingError("silhouette needs at least 2 clusters excluding noise")
    m = Xk.shape[0]
    sq = (Xk * Xk).sum(axis=1)
    d = np.sqrt(np.maximum(sq[:, None] - 2.0 * Xk @ Xk.T + sq[None, :], 0.0))
    onehot = np.zeros((m, k))
    onehot[np.arange(m), inv] = 1.0
    sums = d @ onehot  # (m, k) total distance to each cluster
    sizes = onehot.sum(axis=0)
    own = inv
    s_vals = np.zeros(m)
    for i in range(m):
        size_own = sizes[own[i]]
        if size_own <= 1:
            continue  # singleton contributes 0
        a = sums[i, own[i]] / (size_own - 1)
        others = [sums[i, j] / sizes[j] for j in range(k) if j != own[i]]
        b = min(others)
        denom = max(a, b)
        if denom > 0:
            s_vals[i] = (b - a) / denom
    return float(s_vals.mean())
