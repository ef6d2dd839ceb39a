"""Detector zoo: scaling, KMeans, DBSCAN, logistic regression, boosted trees."""

from .dbscan import NOISE, DbscanResult, dbscan
from .focal import focal_loss
from .gbdt import GbdtModel, Tree, gbdt_fit, gbdt_raw_score, gbdt_score
from .kmeans import KMeansModel, kmeans_assign, kmeans_fit
from .logreg import LogRegModel, logreg_fit, logreg_score
from .scaling import SCALER_MODES, ScalerParams, apply_scaler, fit_scaler

__all__ = [
    "NOISE",
    "DbscanResult",
    "dbscan",
    "focal_loss",
    "GbdtModel",
    "Tree",
    "gbdt_fit",
    "gbdt_raw_score",
    "gbdt_score",
    "KMeansModel",
    "kmeans_assign",
    "kmeans_fit",
    "LogRegModel",
    "logreg_fit",
    "logreg_score",
    "SCALER_MODES",
    "ScalerParams",
    "apply_scaler",
    "fit_scaler",
]
