"""Column scaling transforms fitted on training rows only."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DimensionError

SCALER_MODES = ("minmax_then_standardize", "standardize_only")


@dataclass(frozen=True)
class ScalerParams:
    mode: str
    col_min: np.ndarray | None  # None for standardize_only
    col_max: np.ndarray | None
    mean: np.ndarray
    std: np.ndarray  # zeros replaced by 1 so constant columns pass through centered


def _minmax(X, col_min, col_max):
    span = col_max - col_min
    span = np.where(span > 0, span, 1.0)
    return (X - col_min) / span


def fit_scaler(X: np.ndarray, mode: str) -> ScalerParams:
    """Learn per-column statistics from the training matrix.

    ``minmax_then_standardize`` maps training columns into [0, 1] and then
    centers/normalizes; ``standardize_only`` skips the range stage. Standard
    deviations use the population convention so training variance is exactly 1.
    """
    if mode not in SCALER_MODES:
        raise ConfigurationError(f"unknown scaler mode '{mode}'")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise DimensionError("scaler needs a non-empty 2-D matrix")
    if mode == "minmax_then_standardize":
        col_min = X.min(axis=0)
        col_max = X.max(axis=0)
        Xm = _minmax(X, col_min, col_max)
    else:
        col_min = col_max = None
        Xm = X
    mean = Xm.mean(axis=0)
    std = Xm.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return ScalerParams(mode, col_min, col_max, mean, std)


def apply_scaler(params: ScalerParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != params.mean.shape[0]:
        raise DimensionError(
            f"matrix with {X.shape[-1] if X.ndim == 2 else '?'} columns does not match "
            f"scaler fitted on {params.mean.shape[0]}"
        )
    if params.mode == "minmax_then_standardize":
        X = _minmax(X, params.col_min, params.col_max)
    return (X - params.mean) / params.std
