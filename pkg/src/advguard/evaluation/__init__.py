"""Cross-validation protocol, metrics, and the two experiment harnesses."""

from .experiments import (
    DBSCAN_SCALINGS,
    MODEL_NAMES,
    TABLE2_METRICS,
    ExperimentReport,
    Table1Cell,
    Table2Cell,
    dbscan_design_matrix,
    oriented_margins,
    run_classification_experiment,
    run_clustering_experiment,
)
from .metrics import (
    AgreementReport,
    FoldPlan,
    auc_roc,
    cluster_agreement,
    dp_metric,
    mi_per_column,
    mutual_information,
    select_top_k,
    silhouette,
    stratified_folds,
    v_measure,
)

__all__ = [
    "DBSCAN_SCALINGS",
    "MODEL_NAMES",
    "TABLE2_METRICS",
    "ExperimentReport",
    "Table1Cell",
    "Table2Cell",
    "dbscan_design_matrix",
    "oriented_margins",
    "run_classification_experiment",
    "run_clustering_experiment",
    "AgreementReport",
    "FoldPlan",
    "auc_roc",
    "cluster_agreement",
    "dp_metric",
    "mi_per_column",
    "mutual_information",
    "select_top_k",
    "silhouette",
    "stratified_folds",
    "v_measure",
]
