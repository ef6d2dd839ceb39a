"""Detector feature families: windowed SSIM against white, histograms, embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, IngestionError
from .imaging import (
    DEFAULT_CROP_BOXES,
    CorpusManifest,
    GrayImage,
    collect_variant,
    white_reference,
)

FAMILIES = ("embeddings", "ssim", "histogram")

HISTOGRAM_BINS = 256


@dataclass(frozen=True)
class SsimParams:
    """Window geometry and stabilizers of the local similarity map.

    Windows are uniform (unweighted); stabilizers are C1 = (k1 * L)^2 and
    C2 = (k2 * L)^2 for dynamic range L.
    """

    window: int = 8
    stride: int = 8
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def __post_init__(self):
        if self.window < 2:
            raise ConfigurationError(f"window must be >= 2, got {self.window}")
        if self.stride < 1:
            raise ConfigurationError(f"stride must be >= 1, got {self.stride}")
        if self.k1 <= 0 or self.k2 <= 0 or self.data_range <= 0:
            raise ConfigurationError("k1, k2 and data_range must be positive")

    @property
    def c1(self) -> float:
        return (self.k1 * self.data_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.data_range) ** 2


@dataclass(frozen=True)
class EmbeddingParams:
    """Fallback embedding: 8x8 average pooling plus a seeded Gaussian projection."""

    dim: int = 512
    seed: int = 0
    source: str | None = None  # path (template) of externally computed embeddings

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigurationError(f"embedding dim must be >= 1, got {self.dim}")


@dataclass
class FeatureMatrix:
    """Named-column design matrix; rows follow the manifest order."""

    family: str
    column_names: list[str]
    values: np.ndarray
    row_ids: list[str]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown feature family '{self.family}'")
        if self.values.ndim != 2:
            raise DimensionError("feature values must be a 2-D matrix")
        if self.values.shape != (len(self.row_ids), len(self.column_names)):
            raise DimensionError(
                f"feature shape {self.values.shape} does not match "
                f"{len(self.row_ids)} ids x {len(self.column_names)} columns"
            )
        if not np.isfinite(self.values).all():
            raise ValueError("feature values must be finite")

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]


# ---------------------------------------------------------------------------
# SSIM map
# ---------------------------------------------------------------------------


def _window_grid(width: int, height: int, p: SsimParams) -> tuple[np.ndarray, np.ndarray]:
    if p.window > width or p.window > height:
        raise DimensionError(
            f"window {p.window} does not fit inside image {width}x{height}"
        )
    xs = np.arange(0, width - p.window + 1, p.stride)
    ys = np.arange(0, height - p.window + 1, p.stride)
    return xs, ys


def _window_means(a: np.ndarray, p: SsimParams) -> np.ndarray:
    h, w = a.shape
    xs, ys = _window_grid(w, h, p)
    if p.stride == p.window:
        ny, nx = len(ys), len(xs)
        blocks = a[: ny * p.window, : nx * p.window].reshape(ny, p.window, nx, p.window)
        return blocks.mean(axis=(1, 3))
    view = np.lib.stride_tricks.sliding_window_view(a, (p.window, p.window))
    return view[:: p.stride, :: p.stride].mean(axis=(2, 3))


def ssim_map(img: GrayImage, ref: GrayImage, p: SsimParams) -> np.ndarray:
    """Local SSIM values on the window grid, scan order (rows outer)."""
    if (img.width, img.height) != (ref.width, ref.height):
        raise DimensionError(
            f"image {img.width}x{img.height} and reference "
            f"{ref.width}x{ref.height} differ in size"
        )
    a, b = img.pixels, ref.pixels
    mu_x = _window_means(a, p)
    mu_y = _window_means(b, p)
    var_x = _window_means(a * a, p) - mu_x * mu_x
    var_y = _window_means(b * b, p) - mu_y * mu_y
    cov = _window_means(a * b, p) - mu_x * mu_y
    c1, c2 = p.c1, p.c2
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x * mu_x + mu_y * mu_y + c1) * (var_x + var_y + c2)
    return num / den


def ssim_features(img: GrayImage, ref: GrayImage, p: SsimParams | None = None) -> np.ndarray:
    """Flattened local SSIM map with its mean appended as the final value."""
    p = p or SsimParams()
    s = ssim_map(img, ref, p).ravel()
    return np.concatenate([s, [s.mean()]])


def ssim_column_names(width: int, height: int, p: SsimParams) -> list[str]:
    xs, ys = _window_grid(width, height, p)
    names = [f"ssim_y{y}_x{x}" for y in ys for x in xs]
    names.append("ssim_mean")
    return names


# ---------------------------------------------------------------------------
# grayscale histogram
# ---------------------------------------------------------------------------


def histogram_features(img: GrayImage) -> np.ndarray:
    """Relative frequencies of the 256 quantized gray levels (sums to 1)."""
    q = np.rint(img.flat() * 255.0).astype(np.int64)
    counts = np.bincount(q, minlength=HISTOGRAM_BINS)
    return counts / float(q.size)


def histogram_column_names() -> list[str]:
    return [f"bin_{i:03d}" for i in range(HISTOGRAM_BINS)]


# ---------------------------------------------------------------------------
# embeddings: pooled projection fallback and file ingestion
# ---------------------------------------------------------------------------

_POOL = 8


def _pooled(img: GrayImage) -> np.ndarray:
    if img.width < _POOL or img.height < _POOL:
        raise DimensionError(
            f"image {img.width}x{img.height} is smaller than the {_POOL}x{_POOL} pooling window"
        )
    ny, nx = img.height // _POOL, img.width // _POOL
    blocks = img.pixels[: ny * _POOL, : nx * _POOL].reshape(ny, _POOL, nx, _POOL)
    return blocks.mean(axis=(1, 3)).ravel()


def _projection(m: int, dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng([seed, m, dim])
    return rng.standard_normal((m, dim)) / np.sqrt(m)


def fallback_embedding(img: GrayImage, dim: int = 512, seed: int = 0) -> np.ndarray:
    """Deterministic stand-in embedding: average pooling then Gaussian projection."""
    if dim < 1:
        raise ConfigurationError(f"embedding dim must be >= 1, got {dim}")
    pooled = _pooled(img)
    return pooled @ _projection(pooled.size, dim, seed)


def embedding_column_names(dim: int) -> list[str]:
    return [f"e{i}" for i in range(dim)]


def ingest_embeddings(path, manifest: CorpusManifest) -> FeatureMatrix:
    """Read an externally computed embedding file, reordered to manifest order.

    Expected format: header ``id,e0,e1,...`` then one decimal row per image.
    Row count and id set must match the manifest exactly; non-finite values
    are rejected with the offending row named.
    """
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"embedding file not found: {path}")
    lines = [
        (i + 1, ln)
        for i, ln in enumerate(path.read_text(encoding="utf-8").splitlines())
        if ln.strip() and not ln.startswith("#")
    ]
    if not lines:
        raise IngestionError(f"{path}: empty embedding file")
    header = lines[0][1].split(",")
    if header[0] != "id" or len(header) < 2:
        raise IngestionError(f"{path}: expected header 'id,e0,e1,...'")
    columns = header[1:]
    rows: dict[str, np.ndarray] = {}
    for lineno, line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(header):
            raise IngestionError(f"row at line {lineno}: expected {len(header)} fields")
        rid = parts[0]
        if rid in rows:
            raise IngestionError(f"row at line {lineno}: duplicate id '{rid}'")
        try:
            vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
        except ValueError:
            raise IngestionError(f"row at line {lineno}: unparseable value") from None
        if not np.isfinite(vec).all():
            raise IngestionError(f"row at line {lineno}: non-finite value for id '{rid}'")
        rows[rid] = vec

    ids = manifest.ids()
    if len(rows) != len(ids):
        raise IngestionError(
            f"{path}: {len(rows)} embedding rows but {len(ids)} manifest entries"
        )
    missing = [i for i in ids if i not in rows]
    if missing:
        raise IngestionError(f"{path}: no embedding row for manifest id '{missing[0]}'")
    values = np.stack([rows[i] for i in ids])
    return FeatureMatrix("embeddings", columns, values, list(ids))


# ---------------------------------------------------------------------------
# matrix assembly and persistence
# ---------------------------------------------------------------------------


def extract_features(
    ids: list[str],
    images: list[GrayImage],
    family: str,
    ssim_params: SsimParams | None = None,
    embedding_params: EmbeddingParams | None = None,
) -> FeatureMatrix:
    """Compute one feature family over uniformly sized in-memory images."""
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown feature family '{family}'")
    if not images:
        raise DimensionError("no images to featurize")
    w, h = images[0].width, images[0].height
    for im in images:
        if (im.width, im.height) != (w, h):
            raise DimensionError("images passed to one extraction must share a geometry")

    if family == "histogram":
        values = np.stack([histogram_features(im) for im in images])
        return FeatureMatrix(family, histogram_column_names(), values, list(ids))
    if family == "ssim":
        p = ssim_params or SsimParams()
        ref = white_reference(w, h)
        values = np.stack([ssim_features(im, ref, p) for im in images])
        return FeatureMatrix(family, ssim_column_names(w, h, p), values, list(ids))
    ep = embedding_params or EmbeddingParams()
    pooled = np.stack([_pooled(im) for im in images])
    proj = _projection(pooled.shape[1], ep.dim, ep.seed)
    return FeatureMatrix(family, embedding_column_names(ep.dim), pooled @ proj, list(ids))


def build_feature_matrix(
    manifest: CorpusManifest,
    family: str,
    ssim_params: SsimParams | None = None,
    embedding_params: EmbeddingParams | None = None,
    root=None,
    variant: str = "original",
    crop_boxes=None,
) -> FeatureMatrix:
    """Load one dataset variant from disk and extract a feature family.

    For the embedding family an external source file wins over the fallback
    extractor when ``embedding_params.source`` is set; a ``{variant}``
    placeholder in the source path is substituted.
    """
    if family not in FAMILIES:
        raise ConfigurationError(f"unknown feature family '{family}'")
    boxes = DEFAULT_CROP_BOXES if crop_boxes is None else crop_boxes
    if family == "embeddings" and embedding_params is not None and embedding_params.source:
        src = embedding_params.source.replace("{variant}", variant)
        return ingest_embeddings(src, manifest)
    ids, _, images = collect_variant(manifest, variant, root=root, crop_boxes=boxes)
    return extract_features(ids, images, family, ssim_params, embedding_params)


def save_feature_matrix(fm: FeatureMatrix, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"# family={fm.family}\n")
        fh.write("id," + ",".join(fm.column_names) + "\n")
        for rid, row in zip(fm.row_ids, fm.values):
            fh.write(rid + "," + ",".join(repr(float(v)) for v in row) + "\n")


def load_feature_matrix(path) -> FeatureMatrix:
    path = Path(path)
    if not path.is_file():
        raise IngestionError(f"feature file not found: {path}")
    family = None
    header = None
    ids: list[str] = []
    rows: list[np.ndarray] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("family="):
                family = body[len("family=") :]
            continue
        if header is None:
            header = line.split(",")
            if header[0] != "id":
                raise IngestionError(f"line {lineno}: expected 'id,...' header")
            continue
        parts = line.split(",")
        if len(parts) != len(header):
            raise IngestionError(f"line {lineno}: expected {len(header)} fields")
        ids.append(parts[0])
        try:
            rows.append(np.array([float(v) for v in parts[1:]], dtype=np.float64))
        except ValueError:
            raise IngestionError(f"line {lineno}: unparseable value") from None
    if family is None or header is None:
        raise IngestionError(f"{path}: missing family comment or header")
    return FeatureMatrix(family, header[1:], np.stack(rows), ids)
