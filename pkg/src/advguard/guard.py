"""Two-layer gate: screen an image with a fitted detector, then classify it.

The first layer extracts the detector's feature row from the incoming image
and compares the score against a calibrated threshold; tampered inputs
short-circuit, clean inputs are forwarded to the second-layer classifier.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .detectors import (
    DbscanResult,
    GbdtModel,
    KMeansModel,
    LogRegModel,
    gbdt_score,
    kmeans_assign,
    logreg_score,
)
from .errors import ConfigurationError, DimensionError, UnsupportedDetectorError
from .features import (
    EmbeddingParams,
    SsimParams,
    fallback_embedding,
    histogram_features,
    ssim_features,
)
from .imaging import CorpusManifest, CropBox, GrayImage, crop, load_image, white_reference

VERDICT_HEADER = "id,decision,score,second_layer_label,error"


@dataclass
class GateVerdict:
    image_id: str
    decision: str | None  # "tampered" | "clean"; None when errored
    score: float | None
    second_layer_label: str | None  # present iff decision == "clean"
    timings: dict[str, float] = field(default_factory=dict)
    error: str | None = None


@dataclass
class GateBundle:
    """Fitted detector plus everything needed to featurize one image."""

    kind: str  # kmeans | logreg | gbdt
    model: object
    family: str
    variant: str
    crop_box: CropBox | None  # applied to incoming originals; None for "original"
    selected_columns: np.ndarray
    threshold: float
    tampered_side: int  # +1: scores above threshold are tampered
    input_width: int
    input_height: int
    ssim_params: SsimParams = field(default_factory=SsimParams)
    embedding_params: EmbeddingParams = field(default_factory=EmbeddingParams)

    def __post_init__(self):
        if isinstance(self.model, DbscanResult) or self.kind == "dbscan":
            raise UnsupportedDetectorError(
                "transductive density clustering has no out-of-sample score and "
                "cannot serve as a gate detector"
            )
        if self.kind not in ("kmeans", "logreg", "gbdt"):
            raise ConfigurationError(f"unknown detector kind '{self.kind}'")


def detector_scores(kind: str, model, X: np.ndarray) -> np.ndarray:
    if kind == "kmeans":
        _, margins = kmeans_assign(model, X)
        return margins
    if kind == "logreg":
        return logreg_score(model, X)
    if kind == "gbdt":
        return gbdt_score(model, X)
    raise ConfigurationError(f"unknown detector kind '{kind}'")


def calibrate_threshold(scores_train: np.ndarray, y_train) -> tuple[float, int]:
    """Midpoint of the per-class mean scores, plus the tampered side sign."""
    y = np.asarray(y_train)
    pos = float(scores_train[y == 1].mean())
    neg = float(scores_train[y == 0].mean())
    threshold = 0.5 * (pos + neg)
    return threshold, 1 if pos >= neg else -1


def _feature_row(img: GrayImage, bundle: GateBundle) -> np.ndarray:
    if bundle.family == "histogram":
        return histogram_features(img)
    if bundle.family == "ssim":
        ref = white_reference(img.width, img.height)
        return ssim_features(img, ref, bundle.ssim_params)
    if bundle.family == "embeddings":
        ep = bundle.embedding_params
        return fallback_embedding(img, dim=ep.dim, seed=ep.seed)
    raise ConfigurationError(f"unknown feature family '{bundle.family}'")


def gate(img: GrayImage, bundle: GateBundle, second_layer, image_id: str = "") -> GateVerdict:
    """Screen one original-geometry image; classify it only when clean.

    ``second_layer`` must expose ``predict_label(img) -> int`` and is
    provably not invoked for tampered verdicts.
    """
    t0 = time.perf_counter()
    if (img.width, img.height) != (bundle.input_width, bundle.input_height):
        raise DimensionError(
            f"image {img.width}x{img.height} does not match gate geometry "
            f"{bundle.input_width}x{bundle.input_height}"
        )
    view = crop(img, bundle.crop_box) if bundle.crop_box is not None else img
    row = _feature_row(view, bundle)[bundle.selected_columns]
    score = float(detector_scores(bundle.kind, bundle.model, row[None, :])[0])
    tampered = score > bundle.threshold if bundle.tampered_side > 0 else score < bundle.threshold
    detect_s = time.perf_counter() - t0
    if tampered:
        return GateVerdict(image_id, "tampered", score, None, {"detect_s": detect_s})
    t1 = time.perf_counter()
    label = str(int(second_layer.predict_label(img)))
    classify_s = time.perf_counter() - t1
    return GateVerdict(
        image_id, "clean", score, label, {"detect_s": detect_s, "classify_s": classify_s}
    )


def batch_gate(
    manifest: CorpusManifest, bundle: GateBundle, second_layer, root=None
) -> tuple[list[GateVerdict], dict[str, int]]:
    """One verdict per manifest entry, order preserving; errors never drop rows."""
    base = Path(root) if root is not None else (manifest.root or Path("."))
    verdicts: list[GateVerdict] = []
    summary = {"clean": 0, "tampered": 0, "errors": 0}
    for entry in manifest.entries:
        try:
            if entry.variant != "original":
                raise ConfigurationError(
                    f"gate expects original-geometry entries, got '{entry.variant}'"
                )
            img = load_image(base / entry.path)
            verdict = gate(img, bundle, second_layer, image_id=entry.image_id)
        except Exception as exc:  # per-image failure is recorded, batch continues
            verdict = GateVerdict(entry.image_id, None, None, None, {}, error=str(exc))
        verdicts.append(verdict)
        if verdict.error is not None:
            summary["errors"] += 1
        else:
            summary[verdict.decision] += 1
    return verdicts, summary


def save_verdicts(verdicts: list[GateVerdict], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [VERDICT_HEADER]
    for v in verdicts:
        err = (v.error or "").replace(",", ";").replace("\n", " ")
        score = repr(v.score) if v.score is not None else ""
        lines.append(
            f"{v.image_id},{v.decision or ''},{score},{v.second_layer_label or ''},{err}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
