"""Classification and clustering experiment harnesses over feature matrices.

The classification harness runs stratified cross-validation per cell
(feature family x dataset variant x model): scaler and top-K selection are
fitted on the training fold only, the model is scored on the held-out fold,
and per-fold AUCs collapse to one discriminative-power number per cell. The
clustering harness runs the density clusterer transductively over all rows
of each cell and reports agreement with the tamper labels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..detectors import (
    dbscan,
    gbdt_fit,
    gbdt_score,
    kmeans_assign,
    kmeans_fit,
    logreg_fit,
    logreg_score,
)
from ..errors import ConfigurationError, ExperimentError, TrainingError
from ..features import FeatureMatrix
from ..seeding import derive_seed
from .metrics import auc_roc, cluster_agreement, dp_metric, silhouette, stratified_folds

MODEL_NAMES = ("gbdt", "kmeans", "logreg")
DBSCAN_SCALINGS = ("minmax_rms", "standardize_rms", "none")
TABLE2_METRICS = (
    "n_clusters",
    "n_noise",
    "homogeneity",
    "completeness",
    "v_measure",
    "adjusted_rand_index",
    "silhouette_coefficient",
)


@dataclass(frozen=True)
class Table1Cell:
    family: str
    variant: str
    model: str
    dp: float
    mean_auc: float
    fold_aucs: tuple[float, ...]


@dataclass(frozen=True)
class Table2Cell:
    family: str
    variant: str
    n_clusters: int
    n_noise: int
    homogeneity: float
    completeness: float
    v_measure: float
    adjusted_rand: float
    silhouette: float | None  # absent when fewer than 2 clusters emerge


@dataclass
class ExperimentReport:
    table1: list[Table1Cell]
    table2: list[Table2Cell]
    metadata: dict = field(default_factory=dict)


def _check_cells(features: dict[tuple[str, str], FeatureMatrix]) -> list[tuple[str, str]]:
    keys = list(features)
    if len(set(keys)) != len(keys):
        raise ConfigurationError("duplicate (family, variant) cells in the feature map")
    return keys


def oriented_margins(margins: np.ndarray, margins_train: np.ndarray, y_train) -> np.ndarray:
    """Flip cluster margins so larger means more likely tampered.

    Cluster order out of a seeded fit is arbitrary; the training labels pin
    the orientation before fold AUCs are averaged.
    """
    y = np.asarray(y_train)
    pos = margins_train[y == 1].mean()
    neg = margins_train[y == 0].mean()
    return margins if pos >= neg else -margins


def _fit_and_score(model_name, X_tr, y_tr, X_te, params, seed):
    if model_name == "kmeans":
        p = params.get("kmeans", {})
        model = kmeans_fit(X_tr, k=p.get("k", 2), seed=seed, max_iter=p.get("max_iter", 300))
        _, m_tr = kmeans_assign(model, X_tr)
        _, m_te = kmeans_assign(model, X_te)
        return oriented_margins(m_te, m_tr, y_tr)
    if model_name == "logreg":
        p = params.get("logreg", {})
        model = logreg_fit(
            X_tr, y_tr, l2=p.get("l2", 1e-3), epochs=p.get("epochs", 300), lr=p.get("lr", 0.1)
        )
        return logreg_score(model, X_te)
    if model_name == "gbdt":
        p = params.get("gbdt", {})
        model = gbdt_fit(
            X_tr,
            y_tr,
            iterations=p.get("iterations", 150),
            depth=p.get("depth", 10),
            learning_rate=p.get("lr", 0.1),
            gamma=p.get("gamma", 2.0),
            n_bins=p.get("bins", 64),
            l2_leaf=p.get("l2_leaf", 1.0),
        )
        return gbdt_score(model, X_te)
    raise ConfigurationError(f"unknown model '{model_name}'")


def run_classification_experiment(
    features: dict[tuple[str, str], FeatureMatrix],
    labels,
    models: tuple[str, ...] = MODEL_NAMES,
    folds: int = 10,
    aggregation: str = "mean",
    model_params: dict | None = None,
    selector=None,
    seed: int = 0,
) -> list[Table1Cell]:
    """Cross-validated discriminative power for every cell x model.

    ``selector(X_train, y_train) -> column indices`` defaults to top-K
    mutual-information selection; it only ever sees training rows.
    """
    from .metrics import select_top_k

    if aggregation not in ("mean", "pooled"):
        raise ConfigurationError(f"unknown aggregation '{aggregation}'")
    selector = selector or select_top_k
    model_params = model_params or {}
    y = np.asarray(labels)
    cells: list[Table1Cell] = []
    for family, variant in _check_cells(features):
        fm = features[(family, variant)]
        if fm.n_rows != y.shape[0]:
            raise ConfigurationError(
                f"cell {family}/{variant}: {fm.n_rows} rows but {y.shape[0]} labels"
            )
        X = fm.values
        for model_name in models:
            cell_seed = derive_seed(seed, "cell", family, variant, model_name)
            try:
                plan = stratified_folds(y, k=folds, seed=cell_seed)
                fold_aucs = []
                pooled_scores = np.empty(y.shape[0])
                for f in range(folds):
                    te = plan.assignments == f
                    tr = ~te
                    cols = selector(X[tr], y[tr])
                    scores = _fit_and_score(
                        model_name,
                        X[np.ix_(tr, cols)],
                        y[tr],
                        X[np.ix_(te, cols)],
                        model_params,
                        derive_seed(cell_seed, "fold", str(f)),
                    )
                    pooled_scores[te] = scores
                    fold_aucs.append(auc_roc(scores, y[te]))
                if aggregation == "mean":
                    agg_auc = float(np.mean(fold_aucs))
                else:
                    agg_auc = auc_roc(pooled_scores, y)
            except (TrainingError, ConfigurationError, ValueError) as exc:
                raise ExperimentError(
                    f"cell family={family} variant={variant} model={model_name}: {exc}"
                ) from exc
            cells.append(
                Table1Cell(family, variant, model_name, dp_metric(agg_auc), agg_auc, tuple(fold_aucs))
            )
    return cells


def dbscan_design_matrix(X: np.ndarray, scaling: str = "minmax_rms") -> np.ndarray:
    """Column scaling applied ahead of density clustering, fitted on all rows.

    ``minmax_rms`` maps each column into [0, 1] and divides by sqrt(#cols),
    making the Euclidean radius an RMS per-column deviation and therefore
    comparable across feature families of very different widths;
    ``standardize_rms`` does the same with z-scored columns.
    """
    if scaling not in DBSCAN_SCALINGS:
        raise ConfigurationError(f"unknown dbscan scaling '{scaling}'")
    X = np.asarray(X, dtype=np.float64)
    if scaling == "none":
        return X
    if scaling == "minmax_rms":
        lo = X.min(axis=0)
        span = X.max(axis=0) - lo
        span = np.where(span > 0, span, 1.0)
        Z = (X - lo) / span
    else:
        mu = X.mean(axis=0)
        sd = X.std(axis=0)
        sd = np.where(sd > 0, sd, 1.0)
        Z = (X - mu) / sd
    return Z / np.sqrt(X.shape[1])


def run_clustering_experiment(
    features: dict[tuple[str, str], FeatureMatrix],
    labels,
    eps: float = 0.3,
    min_pts: int = 10,
    scaling: str = "minmax_rms",
) -> list[Table2Cell]:
    """Transductive density clustering per cell plus agreement metrics.

    A silhouette failure (fewer than two clusters) is recorded as an absent
    value rather than an error.
    """
    y = np.asarray(labels)
    cells: list[Table2Cell] = []
    for family, variant in _check_cells(features):
        fm = features[(family, variant)]
        if fm.n_rows != y.shape[0]:
            raise ConfigurationError(
                f"cell {family}/{variant}: {fm.n_rows} rows but {y.shape[0]} labels"
            )
        try:
            design = dbscan_design_matrix(fm.values, scaling)
            result = dbscan(design, eps=eps, min_pts=min_pts)
            agreement = cluster_agreement(result.labels, y)
        except (TrainingError, ConfigurationError, ValueError) as exc:
            raise ExperimentError(f"cell family={family} variant={variant}: {exc}") from exc
        try:
            sil = silhouette(design, result.labels)
        except TrainingError:
            sil = None
        cells.append(
            Table2Cell(
                family,
                variant,
                agreement.n_clusters,
                agreement.n_noise,
                agreement.homogeneity,
                agreement.completeness,
                agreement.v_measure,
                agreement.adjusted_rand,
                sil,
            )
        )
    return cells
