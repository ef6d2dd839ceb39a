"""Grayscale image primitives, crop variants, synthetic corpus generation, manifest I/O."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BoundsError, ConfigurationError, DimensionError, ManifestError

LABELS = ("clean", "attacked")
VARIANTS = ("original", "cropped_v1", "cropped_v2")

# Rec. 601 luma weights used to collapse multi-channel rasters to grayscale.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)

MANIFEST_HEADER = "id,relative_path,label,variant"
VICTIM_LABELS_HEADER = "id,victim_class"


class GrayImage:
    """Immutable grayscale raster with intensities in [0, 1]; 1.0 is white."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.array(pixels, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
            raise DimensionError(f"expected a non-empty 2-D raster, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("pixel intensities must be finite")
        lo, hi = float(arr.min()), float(arr.max())
        if lo < 0.0 or hi > 1.0:
            raise ValueError(f"pixel intensities must lie in [0, 1], got range [{lo:g}, {hi:g}]")
        arr.setflags(write=False)
        self._pixels = arr

    @property
    def pixels(self) -> np.ndarray:
        """Read-only (height, width) array of intensities, row-major."""
        return self._pixels

    @property
    def width(self) -> int:
        return self._pixels.shape[1]

    @property
    def height(self) -> int:
        return self._pixels.shape[0]

    def flat(self) -> np.ndarray:
        return self._pixels.ravel()

    def __eq__(self, other):
        if not isinstance(other, GrayImage):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(
            np.array_equal(self._pixels, other._pixels)
        )

    __hash__ = None

    def __repr__(self):
        return f"GrayImage({self.width}x{self.height})"


@dataclass(frozen=True)
class CropBox:
    """Pixel crop window (left, upper, right, lower), right/lower exclusive."""

    left: int
    upper: int
    right: int
    lower: int

    def __post_init__(self):
        if not (self.left < self.right and self.upper < self.lower):
            raise BoundsError(
                f"degenerate crop box ({self.left}, {self.upper}, {self.right}, {self.lower})"
            )
        if self.left < 0 or self.upper < 0:
            raise BoundsError("crop box coordinates must be non-negative")

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.lower - self.upper


# Crop windows for the two cropped dataset variants: a full-height slice of the
# central band and the same slice restricted to the central rows.
V1_BOX = CropBox(160, 0, 200, 369)
V2_BOX = CropBox(160, 50, 200, 319)
DEFAULT_CROP_BOXES = {"cropped_v1": V1_BOX, "cropped_v2": V2_BOX}


def to_gray(raster, bit_depth: int = 8) -> GrayImage:
    """Collapse a (H, W) or (H, W, C>=3) raster to normalized grayscale.

    Channel values are expected in [0, 2**bit_depth - 1]; multi-channel input
    is reduced with the luma weights 0.299/0.587/0.114 on the first three
    channels.
    """
    arr = np.asarray(raster, dtype=np.float64)
    if arr.size == 0:
        raise DimensionError("zero-sized raster")
    scale = float(2**bit_depth - 1)
    if arr.ndim == 2:
        return GrayImage(arr / scale)
    if arr.ndim == 3 and arr.shape[2] >= 3:
        luma = (
            LUMA_WEIGHTS[0] * arr[:, :, 0]
            + LUMA_WEIGHTS[1] * arr[:, :, 1]
            + LUMA_WEIGHTS[2] * arr[:, :, 2]
        )
        return GrayImage(luma / scale)
    raise DimensionError(f"unsupported raster shape {arr.shape}")


def crop(img: GrayImage, box: CropBox) -> GrayImage:
    """Extract the sub-image under ``box``; the box must fit inside ``img``."""
    if box.right > img.width or box.lower > img.height:
        raise BoundsError(
            f"crop box ({box.left}, {box.upper}, {box.right}, {box.lower}) exceeds "
            f"image bounds {img.width}x{img.height}"
        )
    return GrayImage(img.pixels[box.upper : box.lower, box.left : box.right])


def white_reference(width: int, height: int) -> GrayImage:
    """All-white image of the given geometry."""
    if width <= 0 or height <= 0:
        raise DimensionError(f"invalid reference dimensions {width}x{height}")
    return GrayImage(np.ones((height, width)))


# ---------------------------------------------------------------------------
# image file I/O (8-bit grayscale PNG; lossless formats only)
# ---------------------------------------------------------------------------


def save_image(img: GrayImage, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.rint(img.pixels * 255.0).astype(np.uint8)
    Image.fromarray(data, mode="L").save(path, format="PNG")


def load_image(path) -> GrayImage:
    path = Path(path)
    with Image.open(path) as im:
        if im.format != "PNG":
            raise ManifestError(f"{path}: only lossless PNG images are accepted, got {im.format}")
        if im.mode == "L":
            return GrayImage(np.asarray(im, dtype=np.float64) / 255.0)
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return to_gray(arr)


# ---------------------------------------------------------------------------
# corpus manifest
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    image_id: str
    path: str  # relative to the manifest location, posix separators
    label: str  # clean | attacked
    variant: str  # original | cropped_v1 | cropped_v2


@dataclass
class CorpusManifest:
    entries: list[ManifestEntry]
    seed: int | None = None
    root: Path | None = field(default=None, compare=False)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.image_id in seen:
                raise ManifestError(f"duplicate image id '{e.image_id}'")
            seen.add(e.image_id)
            if e.label not in LABELS:
                raise ManifestError(f"unknown label '{e.label}' for id '{e.image_id}'")
            if e.variant not in VARIANTS:
                raise ManifestError(f"unknown variant '{e.variant}' for id '{e.image_id}'")

    def ids(self) -> list[str]:
        return [e.image_id for e in self.entries]

    def __len__(self):
        return len(self.entries)


def save_manifest(manifest: CorpusManifest, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    if manifest.seed is not None:
        lines.append(f"# seed={manifest.seed}")
    lines.append(MANIFEST_HEADER)
    for e in manifest.entries:
        lines.append(f"{e.image_id},{e.path},{e.label},{e.variant}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_manifest(path) -> CorpusManifest:
    """Parse a manifest file and check that every referenced image exists."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest file not found: {path}")
    root = path.parent
    seed = None
    entries = []
    seen = set()
    header_seen = False
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("seed="):
                try:
                    seed = int(body[5:])
                except ValueError:
                    raise ManifestError(f"line {lineno}: malformed seed comment '{raw}'") from None
            continue
        if not header_seen:
            if line != MANIFEST_HEADER:
                raise ManifestError(f"line {lineno}: expected header '{MANIFEST_HEADER}'")
            header_seen = True
            continue
        fields = line.split(",")
        if len(fields) != 4:
            raise ManifestError(f"line {lineno}: expected 4 comma-separated fields")
        image_id, rel, label, variant = fields
        if image_id in seen:
            raise ManifestError(f"line {lineno}: duplicate id '{image_id}'")
        seen.add(image_id)
        if label not in LABELS:
            raise ManifestError(f"line {lineno}: unknown label '{label}'")
        if variant not in VARIANTS:
            raise ManifestError(f"line {lineno}: unknown variant '{variant}'")
        if not (root / rel).is_file():
            raise ManifestError(f"line {lineno}: path '{rel}' does not resolve to a file")
        entries.append(ManifestEntry(image_id, rel, label, variant))
    if not header_seen:
        raise ManifestError("manifest is missing its header line")
    return CorpusManifest(entries, seed=seed, root=root)


def save_victim_labels(labels: dict[str, int], path) -> None:
    path = Path(path)
    lines = [VICTIM_LABELS_HEADER]
    for image_id in sorted(labels):
        lines.append(f"{image_id},{labels[image_id]}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_victim_labels(path) -> dict[str, int]:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"victim label file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != VICTIM_LABELS_HEADER:
        raise ManifestError(f"{path}: expected header '{VICTIM_LABELS_HEADER}'")
    out: dict[str, int] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            image_id, cls = line.split(",")
            out[image_id] = int(cls)
        except ValueError:
            raise ManifestError(f"line {lineno}: malformed victim label '{line}'") from None
    return out


# ---------------------------------------------------------------------------
# synthetic corpus generation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSpec:
    """Parameters of the synthetic two-class corpus.

    ``balance`` is the fraction of images rostered for the attack stage; the
    remaining images stay clean. Every image additionally carries one of two
    visual classes (a textured motif patch, present or absent) which is the
    classification task of the second-layer model.
    """

    count: int
    width: int = 400
    height: int = 369
    balance: float = 0.5
    seed: int = 0
    noise_sigma: float = 0.006
    motif_amplitude: float = 0.012

    def __post_init__(self):
        if self.count < 2:
            raise ConfigurationError(f"corpus count must be >= 2, got {self.count}")
        if not (0.0 < self.balance < 1.0):
            raise ConfigurationError(f"class balance must lie in (0, 1), got {self.balance}")
        if self.noise_sigma < 0 or self.motif_amplitude < 0:
            raise ConfigurationError("noise sigma and motif amplitude must be non-negative")


def _align8(v: int) -> int:
    return v - (v % 8)


def _base_texture(width: int, height: int) -> np.ndarray:
    """Smooth deterministic part-on-background scene shared by every image.

    The part is a bright, near-white plate (intensities within the attack
    budget of 1.0, so perturbations clip asymmetrically at the white wall)
    sitting on a mid-gray textured background, with a matte inlay panel
    where the class motif lives. All edges are soft so local window
    variance stays far below the similarity stabilizers.
    """
    x = np.arange(width, dtype=np.float64)[None, :]
    y = np.arange(height, dtype=np.float64)[:, None]
    plate = (
        0.988
        + 0.004 * np.sin(2.0 * np.pi * x / 181.0 + 0.7)
        + 0.002 * np.cos(2.0 * np.pi * y / 139.0 + 0.3)
    )
    background = (
        0.55
        + 0.035 * np.sin(2.0 * np.pi * x / 97.0 + 1.1)
        + 0.02 * np.cos(2.0 * np.pi * y / 71.0)
    )
    cx, cy = 0.5 * width, 0.5 * height
    r = np.sqrt(((x - cx) / (0.42 * width)) ** 2 + ((y - cy) / (0.44 * height)) ** 2)
    inside = 1.0 / (1.0 + np.exp((r - 1.0) * 18.0))
    tex = background * (1.0 - inside) + plate * inside

    # matte inlay panel hosting the motif, eased over a few px per side
    x0, x1, y0, y1 = motif_region(width, height)
    margin = float(max(4, min(12, width // 32)))
    ease = float(max(2, min(5, width // 80)))
    px = 1.0 / (1.0 + np.exp(-(x - (x0 - margin)) / ease))
    px *= 1.0 / (1.0 + np.exp(-((x1 + margin) - x) / ease))
    py = 1.0 / (1.0 + np.exp(-(y - (y0 - margin)) / ease))
    py *= 1.0 / (1.0 + np.exp(-((y1 + margin) - y) / ease))
    panel = px * py
    return tex * (1.0 - panel) + 0.60 * panel


def motif_region(width: int, height: int) -> tuple[int, int, int, int]:
    """8-aligned (x0, x1, y0, y1) patch carrying the class motif."""
    x0 = _align8(int(0.60 * width))
    x1 = min(x0 + max(16, _align8(int(0.28 * width))), _align8(width))
    y0 = _align8(int(0.33 * height))
    y1 = min(y0 + max(16, _align8(int(0.26 * height))), _align8(height))
    return x0, x1, y0, y1


def _motif_pattern(width: int, height: int, amplitude: float) -> np.ndarray:
    """Zero-mean 2x2 checkerboard confined to the motif patch.

    The block structure keeps 8x8 window means (and hence average pools)
    unchanged while adding a fixed amount of local variance, so the two
    visual classes stay close in every feature family.
    """
    x0, x1, y0, y1 = motif_region(width, height)
    if x1 - x0 < 8 or y1 - y0 < 8:
        raise ConfigurationError(
            f"image geometry {width}x{height} leaves no room for the class motif"
        )
    pattern = np.zeros((height, width))
    xs = np.arange(x0, x1)[None, :] // 2
    ys = np.arange(y0, y1)[:, None] // 2
    pattern[y0:y1, x0:x1] = amplitude * (((xs + ys) % 2) * 2.0 - 1.0)
    return pattern


def generate_corpus(
    spec: CorpusSpec, out_dir, crop_boxes: dict[str, CropBox] | None = None
) -> CorpusManifest:
    """Write a synthetic corpus (images, manifest, victim labels) to ``out_dir``.

    Deterministic for a fixed spec: two runs produce byte-identical trees.
    All images are written clean; entries labelled ``attacked`` form the
    roster that the attack stage will later perturb in place.
    """
    boxes = DEFAULT_CROP_BOXES if crop_boxes is None else crop_boxes
    for name, box in boxes.items():
        if box.right > spec.width or box.lower > spec.height:
            raise ConfigurationError(
                f"corpus geometry {spec.width}x{spec.height} cannot host crop box "
                f"{name} ({box.left}, {box.upper}, {box.right}, {box.lower})"
            )
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(spec.seed)
    base = _base_texture(spec.width, spec.height)
    motif = _motif_pattern(spec.width, spec.height, spec.motif_amplitude)

    n_attacked = min(max(int(round(spec.count * spec.balance)), 1), spec.count - 1)
    attacked = np.zeros(spec.count, dtype=bool)
    attacked[rng.permutation(spec.count)[:n_attacked]] = True

    entries = []
    victim_labels: dict[str, int] = {}
    for i in range(spec.count):
        noise = rng.normal(0.0, spec.noise_sigma, size=base.shape) if spec.noise_sigma else 0.0
        cls = i % 2
        px = base + noise
        if cls:
            px = px + motif
        img = GrayImage(np.clip(px, 0.0, 1.0))
        image_id = f"img_{i:05d}"
        save_image(img, images_dir / f"{image_id}.png")
        entries.append(
            ManifestEntry(
                image_id,
                f"images/{image_id}.png",
                "attacked" if attacked[i] else "clean",
                "original",
            )
        )
        victim_labels[image_id] = cls

    manifest = CorpusManifest(entries, seed=spec.seed, root=out_dir)
    save_manifest(manifest, out_dir / "manifest.csv")
    save_victim_labels(victim_labels, out_dir / "victim_labels.csv")
    return manifest


# ---------------------------------------------------------------------------
# variant collection
# ---------------------------------------------------------------------------


def collect_variant(
    manifest: CorpusManifest,
    variant: str,
    root=None,
    crop_boxes: dict[str, CropBox] | None = None,
) -> tuple[list[str], np.ndarray, list[GrayImage]]:
    """Load the images of one dataset variant in manifest order.

    Entries tagged with the requested variant are used as stored; when none
    exist the variant is derived by cropping the ``original`` entries
    (attack-then-crop ordering). Returns ids, 0/1 labels (1 = attacked) and
    images; mixed geometries within the variant are rejected.
    """
    if variant not in VARIANTS:
        raise ConfigurationError(f"unknown variant '{variant}'")
    boxes = DEFAULT_CROP_BOXES if crop_boxes is None else crop_boxes
    base = Path(root) if root is not None else (manifest.root or Path("."))

    tagged = [e for e in manifest.entries if e.variant == variant]
    if tagged:
        pairs = [(e, load_image(base / e.path)) for e in tagged]
    else:
        originals = [e for e in manifest.entries if e.variant == "original"]
        if variant == "original" or not originals:
            raise ManifestError(f"manifest has no entries usable for variant '{variant}'")
        box = boxes[variant]
        pairs = [(e, crop(load_image(base / e.path), box)) for e in originals]

    sizes = {(im.width, im.height) for _, im in pairs}
    if len(sizes) > 1:
        raise DimensionError(f"mixed image sizes within variant '{variant}': {sorted(sizes)}")
    ids = [e.image_id for e, _ in pairs]
    labels = np.array([1 if e.label == "attacked" else 0 for e, _ in pairs], dtype=np.int64)
    images = [im for _, im in pairs]
    return ids, labels, images
