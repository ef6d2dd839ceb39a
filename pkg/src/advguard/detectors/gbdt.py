"""Newton boosting on binned regression trees driven by the focal loss.

Stands in for an off-the-shelf boosted-tree learner while honoring the same
knobs (iteration count, tree depth, logloss monitoring). Features are
quantile-binned once per fit; trees grow level-wise with histogram split
finding, which keeps fitting vectorized end to end.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigurationError, DimensionError, TrainingError
from .focal import focal_loss

_HESS_FLOOR = 1e-6  # focal hessians can be negative; floor keeps leaves finite
_MIN_GAIN = 1e-12


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


@dataclass
class Tree:
    feature: np.ndarray  # (n_nodes,) int32, -1 marks a leaf
    threshold_bin: np.ndarray  # go left when bin <= threshold_bin
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # leaf values (internal nodes hold 0)

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]


@dataclass
class GbdtModel:
    trees: list[Tree]
    bin_edges: list[np.ndarray]
    base_score: float  # initial logit
    learning_rate: float
    gamma: float
    depth: int
    loss_trace: list[float] = field(default_factory=list)


def _bin_columns(X: np.ndarray, n_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    edges_per_col = []
    bins = np.empty(X.shape, dtype=np.int32)
    qs = np.arange(1, n_bins) / n_bins
    for j in range(X.shape[1]):
        edges = np.unique(np.quantile(X[:, j], qs))
        edges_per_col.append(edges)
        bins[:, j] = np.searchsorted(edges, X[:, j], side="right")
    return bins, edges_per_col


def _apply_bins(X: np.ndarray, edges_per_col: list[np.ndarray]) -> np.ndarray:
    bins = np.empty(X.shape, dtype=np.int32)
    for j, edges in enumerate(edges_per_col):
        bins[:, j] = np.searchsorted(edges, X[:, j], side="right")
    return bins


class _TreeBuilder:
    def __init__(self, depth, n_bins, l2_leaf, min_samples_leaf):
        self.depth = depth
        self.n_bins = n_bins
        self.l2 = l2_leaf
        self.min_leaf = min_samples_leaf
        self.feature = [-1]
        self.threshold = [-1]
        self.left = [-1]
        self.right = [-1]
        self.value = [0.0]

    def _new_node(self):
        self.feature.append(-1)
        self.threshold.append(-1)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(0.0)
        return len(self.feature) - 1

    def build(self, bins, g, h):
        n, c = bins.shape
        nb = self.n_bins
        node_of = np.zeros(n, dtype=np.int64)
        active = [0]
        for _ in range(self.depth):
            if not active:
                break
            na = len(active)
            node_pos = np.full(len(self.feature), -1, dtype=np.int64)
            for k, nid in enumerate(active):
                node_pos[nid] = k
            row_pos = node_pos[node_of]
            live = row_pos >= 0
            rows = np.flatnonzero(live)
            key = (row_pos[rows, None] * c + np.arange(c)[None, :]) * nb + bins[rows]
            key = key.ravel()
            size = na * c * nb
            G = np.bincount(key, weights=np.repeat(g[rows], c), minlength=size).reshape(na, c, nb)
            H = np.bincount(key, weights=np.repeat(h[rows], c), minlength=size).reshape(na, c, nb)
            CNT = np.bincount(key, minlength=size).reshape(na, c, nb)

            g_tot = G[:, 0, :].sum(axis=1)
            h_tot = H[:, 0, :].sum(axis=1)
            c_tot = CNT[:, 0, :].sum(axis=1)
            gl = G.cumsum(axis=2)[:, :, :-1]
            hl = H.cumsum(axis=2)[:, :, :-1]
            cl = CNT.cumsum(axis=2)[:, :, :-1]
            gr = g_tot[:, None, None] - gl
            hr = h_tot[:, None, None] - hl
            cr = c_tot[:, None, None] - cl
            gain = (
                gl * gl / (hl + self.l2)
                + gr * gr / (hr + self.l2)
                - (g_tot * g_tot / (h_tot + self.l2))[:, None, None]
            )
            gain = np.where((cl >= self.min_leaf) & (cr >= self.min_leaf), gain, -np.inf)
            flat = gain.reshape(na, -1)
            best = flat.argmax(axis=1)
            best_gain = flat[np.arange(na), best]

            next_active = []
            split_feat = np.full(len(self.feature), -1, dtype=np.int64)
            split_thr = np.zeros(len(self.feature), dtype=np.int64)
            child_l = np.zeros(len(self.feature), dtype=np.int64)
            child_r = np.zeros(len(self.feature), dtype=np.int64)
            for k, nid in enumerate(active):
                if not np.isfinite(best_gain[k]) or best_gain[k] <= _MIN_GAIN:
                    self.value[nid] = -g_tot[k] / (h_tot[k] + self.l2)
                    continue
                feat = int(best[k] // (nb - 1))
                thr = int(best[k] % (nb - 1))
                li = self._new_node()
                ri = self._new_node()
                self.feature[nid] = feat
                self.threshold[nid] = thr
                self.left[nid] = li
                self.right[nid] = ri
                split_feat[nid] = feat
                split_thr[nid] = thr
                child_l[nid] = li
                child_r[nid] = ri
                next_active.extend((li, ri))
            moving = live & (split_feat[node_of] >= 0)
            mrows = np.flatnonzero(moving)
            go_left = bins[mrows, split_feat[node_of[mrows]]] <= split_thr[node_of[mrows]]
            node_of[mrows] = np.where(
                go_left, child_l[node_of[mrows]], child_r[node_of[mrows]]
            )
            active = next_active
        if active:
            # depth exhausted: settle the remaining open nodes as leaves
            g_sum = np.bincount(node_of, weights=g, minlength=len(self.feature))
            h_sum = np.bincount(node_of, weights=h, minlength=len(self.feature))
            for nid in active:
                self.value[nid] = -g_sum[nid] / (h_sum[nid] + self.l2)
        tree = Tree(
            np.asarray(self.feature, dtype=np.int32),
            np.asarray(self.threshold, dtype=np.int32),
            np.asarray(self.left, dtype=np.int32),
            np.asarray(self.right, dtype=np.int32),
            np.asarray(self.value, dtype=np.float64),
        )
        return tree, node_of


def _tree_leaf_of(tree: Tree, bins: np.ndarray, depth: int) -> np.ndarray:
    node = np.zeros(bins.shape[0], dtype=np.int64)
    for _ in range(depth + 1):
        feat = tree.feature[node]
        open_mask = feat >= 0
        if not open_mask.any():
            break
        rows = np.flatnonzero(open_mask)
        go_left = bins[rows, feat[rows]] <= tree.threshold_bin[node[rows]]
        node[rows] = np.where(go_left, tree.left[node[rows]], tree.right[node[rows]])
    return node


def gbdt_fit(
    X: np.ndarray,
    y: np.ndarray,
    iterations: int = 150,
    depth: int = 10,
    learning_rate: float = 0.1,
    gamma: float = 2.0,
    n_bins: int = 64,
    l2_leaf: float = 1.0,
    min_samples_leaf: int = 1,
) -> GbdtModel:
    """Boost regression trees on focal-loss gradients and hessians.

    The training logloss (plain binary cross-entropy) is recorded before the
    first iteration and after every update.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionError("X and y disagree on the number of rows")
    if np.unique(y).size < 2:
        raise TrainingError("boosted trees need both classes present")
    if iterations < 1:
        raise ConfigurationError(f"iterations must be >= 1, got {iterations}")
    if depth < 1:
        raise ConfigurationError(f"depth must be >= 1, got {depth}")
    if n_bins < 2:
        raise ConfigurationError(f"n_bins must be >= 2, got {n_bins}")

    bins, edges = _bin_columns(X, n_bins)
    prior = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    base = float(np.log(prior / (1.0 - prior)))
    f = np.full(X.shape[0], base)

    def logloss(fv):
        return float(np.mean(np.logaddexp(0.0, fv) - y * fv))

    trace = [logloss(f)]
    trees: list[Tree] = []
    for _ in range(iterations):
        p = np.clip(_sigmoid(f), 1e-12, 1 - 1e-12)
        _, g, h = focal_loss(p, y, gamma)
        h = np.maximum(h, _HESS_FLOOR)
        builder = _TreeBuilder(depth, n_bins, l2_leaf, min_samples_leaf)
        tree, leaf_of = builder.build(bins, g, h)
        trees.append(tree)
        f = f + learning_rate * tree.value[leaf_of]
        trace.append(logloss(f))
    return GbdtModel(trees, edges, base, learning_rate, gamma, depth, trace)


def gbdt_raw_score(model: GbdtModel, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != len(model.bin_edges):
        raise DimensionError(
            f"matrix with {X.shape[-1] if X.ndim == 2 else '?'} columns does not match "
            f"model fitted on {len(model.bin_edges)}"
        )
    bins = _apply_bins(X, model.bin_edges)
    f = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        f += model.learning_rate * tree.value[_tree_leaf_of(tree, bins, model.depth)]
    return f


def gbdt_score(model: GbdtModel, X: np.ndarray) -> np.ndarray:
    """Probability of the positive class."""
    p = _sigmoid(gbdt_raw_score(model, X))
    return np.clip(p, 1e-15, 1.0 - 1e-15)
