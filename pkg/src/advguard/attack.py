"""Victim classifier training and projected-gradient-descent image attacks."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, DimensionError, TrainingError
from .imaging import GrayImage

VICTIM_MAGIC = b"AGVM0001"


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0)))


def _bce_from_logit(logit, y):
    # log(1 + e^z) - y*z, numerically stable for large |z|
    return float(np.mean(np.logaddexp(0.0, logit) - y * logit))


@dataclass(frozen=True)
class AttackSpec:
    """L-infinity attack budget and iteration schedule."""

    epsilon: float = 8 / 255
    alpha: float = 2 / 255
    iterations: int = 10
    random_start: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.alpha <= 0:
            raise ConfigurationError(f"alpha must be > 0, got {self.alpha}")
        if self.iterations < 1:
            raise ConfigurationError(f"iterations must be >= 1, got {self.iterations}")


class VictimModel:
    """One-hidden-layer perceptron: tanh hidden units, sigmoid output.

    Pre-activations are width-scaled (1/sqrt(d) on the input layer,
    1/sqrt(H) on the output layer) so that full-batch gradient descent with
    the default learning rate stays stable on flattened high-resolution
    images as well as on toy inputs.
    """

    def __init__(self, w1, b1, w2, b2, input_width, input_height, seed=0):
        self.w1 = np.asarray(w1, dtype=np.float64)
        self.b1 = np.asarray(b1, dtype=np.float64)
        self.w2 = np.asarray(w2, dtype=np.float64)
        self.b2 = float(b2)
        self.input_width = int(input_width)
        self.input_height = int(input_height)
        self.seed = int(seed)
        self.loss_trace: list[float] = []
        d = self.input_width * self.input_height
        if self.w1.shape != (self.hidden, d) or self.b1.shape != (self.hidden,):
            raise DimensionError("victim weight shapes are inconsistent with the input size")
        self._in_scale = 1.0 / np.sqrt(d)
        self._hid_scale = 1.0 / np.sqrt(self.hidden)

    @property
    def hidden(self) -> int:
        return self.w2.shape[0]

    @property
    def input_size(self) -> int:
        return self.input_width * self.input_height

    def logits(self, X: np.ndarray) -> np.ndarray:
        h = np.tanh(X @ self.w1.T * self._in_scale + self.b1)
        return h @ self.w2 * self._hid_scale + self.b2

    def forward(self, X: np.ndarray) -> np.ndarray:
        """Probability of class 1; always inside the open interval (0, 1)."""
        p = _sigmoid(self.logits(X))
        return np.clip(p, 1e-15, 1.0 - 1e-15)

    def predict_label(self, img: GrayImage) -> int:
        self._check_image(img)
        return int(self.forward(img.flat()[None, :])[0] >= 0.5)

    def loss(self, X: np.ndarray, y: np.ndarray) -> float:
        return _bce_from_logit(self.logits(X), y)

    def _check_image(self, img: GrayImage) -> None:
        if (img.width, img.height) != (self.input_width, self.input_height):
            raise DimensionError(
                f"image {img.width}x{img.height} does not match victim input "
                f"{self.input_width}x{self.input_height}"
            )


def _flatten_images(images) -> tuple[np.ndarray, int, int]:
    if len(images) == 0:
        raise TrainingError("no training images")
    w, h = images[0].width, images[0].height
    for im in images:
        if (im.width, im.height) != (w, h):
            raise DimensionError("training images must share one geometry")
    X = np.stack([im.flat() for im in images])
    return X, w, h


def train_victim(images, labels, epochs=200, seed=0, hidden=32, lr=0.5) -> VictimModel:
    """Fit the victim with full-batch gradient descent on binary cross-entropy.

    Deterministic for a fixed seed; the per-epoch loss trace is kept on the
    returned model (length ``epochs + 1``, including the initial loss).
    """
    X, w, h = _flatten_images(images)
    y = np.asarray(labels, dtype=np.float64)
    if y.shape != (X.shape[0],):
        raise DimensionError("labels must match the number of images")
    classes = np.unique(y)
    if classes.size < 2:
        raise TrainingError("victim training needs both classes present")
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise TrainingError(f"labels must be 0/1, got {classes}")
    for c in (0.0, 1.0):
        if np.sum(y == c) < 2:
            raise TrainingError("victim training needs at least 2 examples per class")
    if epochs < 0:
        raise ConfigurationError("epochs must be >= 0")

    d = X.shape[1]
    n = X.shape[0]
    rng = np.random.default_rng(seed)
    w1 = rng.standard_normal((hidden, d))
    b1 = np.zeros(hidden)
    w2 = rng.standard_normal(hidden)
    b2 = 0.0
    model = VictimModel(w1, b1, w2, b2, w, h, seed=seed)

    trace = []
    in_scale, hid_scale = model._in_scale, model._hid_scale
    for _ in range(epochs):
        z1 = X @ model.w1.T * in_scale + model.b1
        hid = np.tanh(z1)
        logit = hid @ model.w2 * hid_scale + model.b2
        trace.append(_bce_from_logit(logit, y))
        delta = (_sigmoid(logit) - y) / n
        g_w2 = hid.T @ delta * hid_scale
        g_b2 = float(delta.sum())
        dz1 = (delta[:, None] * model.w2[None, :] * hid_scale) * (1.0 - hid**2)
        g_w1 = dz1.T @ X * in_scale
        g_b1 = dz1.sum(axis=0)
        model.w1 -= lr * g_w1
        model.b1 -= lr * g_b1
        model.w2 -= lr * g_w2
        model.b2 -= lr * g_b2
    trace.append(model.loss(X, y))
    model.loss_trace = trace
    return model


def input_gradient(model: VictimModel, img: GrayImage, label) -> np.ndarray:
    """Analytic gradient of the cross-entropy loss w.r.t. the pixels."""
    model._check_image(img)
    x = img.flat()
    z1 = model.w1 @ x * model._in_scale + model.b1
    hid = np.tanh(z1)
    logit = float(hid @ model.w2 * model._hid_scale + model.b2)
    p = _sigmoid(logit)
    delta = p - float(label)
    u = delta * model.w2 * model._hid_scale * (1.0 - hid**2)
    grad = model.w1.T @ u * model._in_scale
    return grad.reshape(img.height, img.width)


def _batch_gradient(model: VictimModel, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    # per-image loss gradients evaluated jointly; rows are independent
    z1 = X @ model.w1.T * model._in_scale + model.b1
    hid = np.tanh(z1)
    logit = hid @ model.w2 * model._hid_scale + model.b2
    delta = _sigmoid(logit) - y
    u = (delta[:, None] * model.w2[None, :] * model._hid_scale) * (1.0 - hid**2)
    return u @ model.w1 * model._in_scale


def pgd_attack(model: VictimModel, img: GrayImage, label, spec: AttackSpec, seed=0) -> GrayImage:
    """Iterated sign-gradient ascent projected into the epsilon ball and [0, 1].

    Deterministic for fixed (model, img, spec, seed). The returned image
    satisfies ``max|x_adv - x0| <= epsilon`` and stays inside [0, 1].
    """
    model._check_image(img)
    x0 = img.flat().copy()
    rng = np.random.default_rng(seed)
    if spec.random_start and spec.epsilon > 0:
        x = x0 + rng.uniform(-spec.epsilon, spec.epsilon, size=x0.size)
        np.clip(x, 0.0, 1.0, out=x)
    else:
        x = x0.copy()
    y = np.array([float(label)])
    lo = np.maximum(x0 - spec.epsilon, 0.0)
    hi = np.minimum(x0 + spec.epsilon, 1.0)
    for _ in range(spec.iterations):
        g = _batch_gradient(model, x[None, :], y)[0]
        x += spec.alpha * np.sign(g)
        np.clip(x, lo, hi, out=x)
    return GrayImage(x.reshape(img.height, img.width))


def pgd_attack_many(model, images, labels, spec: AttackSpec, seed=0) -> list[GrayImage]:
    """Vectorized per-image attack; image ``i`` uses the derived seed (seed, i)."""
    if not images:
        return []
    X0, w, h = _flatten_images(images)
    if (w, h) != (model.input_width, model.input_height):
        raise DimensionError("images do not match victim input geometry")
    y = np.asarray(labels, dtype=np.float64)
    X = X0.copy()
    if spec.random_start and spec.epsilon > 0:
        for i in range(X.shape[0]):
            rng = np.random.default_rng([seed, i])
            X[i] += rng.uniform(-spec.epsilon, spec.epsilon, size=X.shape[1])
        np.clip(X, 0.0, 1.0, out=X)
    lo = np.maximum(X0 - spec.epsilon, 0.0)
    hi = np.minimum(X0 + spec.epsilon, 1.0)
    for _ in range(spec.iterations):
        G = _batch_gradient(model, X, y)
        X += spec.alpha * np.sign(G)
        np.clip(X, lo, hi, out=X)
    return [GrayImage(row.reshape(h, w)) for row in X]


# ---------------------------------------------------------------------------
# persistence: magic, dimensions, then little-endian float64 blocks
# ---------------------------------------------------------------------------


def save_victim(model: VictimModel, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = struct.pack(
        "<iiiq", model.input_width, model.input_height, model.hidden, model.seed
    )
    blocks = [
        model.w1.astype("<f8").tobytes(),
        model.b1.astype("<f8").tobytes(),
        model.w2.astype("<f8").tobytes(),
        struct.pack("<d", model.b2),
    ]
    path.write_bytes(VICTIM_MAGIC + header + b"".join(blocks))


def load_victim(path) -> VictimModel:
    raw = Path(path).read_bytes()
    if raw[: len(VICTIM_MAGIC)] != VICTIM_MAGIC:
        raise ValueError(f"{path}: not a victim model file")
    off = len(VICTIM_MAGIC)
    width, height, hidden, seed = struct.unpack_from("<iiiq", raw, off)
    off += struct.calcsize("<iiiq")
    d = width * height
    need = (hidden * d + hidden + hidden + 1) * 8
    if len(raw) - off != need:
        raise ValueError(f"{path}: truncated victim model payload")
    w1 = np.frombuffer(raw, dtype="<f8", count=hidden * d, offset=off).reshape(hidden, d)
    off += hidden * d * 8
    b1 = np.frombuffer(raw, dtype="<f8", count=hidden, offset=off)
    off += hidden * 8
    w2 = np.frombuffer(raw, dtype="<f8", count=hidden, offset=off)
    off += hidden * 8
    (b2,) = struct.unpack_from("<d", raw, off)
    return VictimModel(w1.copy(), b1.copy(), w2.copy(), b2, width, height, seed=seed)
