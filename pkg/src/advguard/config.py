"""Run configuration: strict INI parsing into the stage dataclasses.

One file configures every stage. Unknown sections or keys are rejected so a
typo cannot silently fall back to a default and invalidate an experiment.
The master seed comes from the command line and deterministically derives
every stage seed.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .attack import AttackSpec
from .errors import ConfigurationError
from .features import FAMILIES, EmbeddingParams, SsimParams
from .imaging import VARIANTS, CorpusSpec, CropBox
from .seeding import derive_seed

_SCHEMA: dict[str, set[str]] = {
    "corpus": {
        "count", "width", "height", "balance", "noise_sigma", "motif_amplitude",
        "crop_v1", "crop_v2",
    },
    "attack": {
        "epsilon", "alpha", "iterations", "random_start",
        "victim_hidden", "victim_epochs", "victim_lr",
    },
    "features.ssim": {"window", "stride", "k1", "k2", "data_range"},
    "features.histogram": set(),
    "features.embedding": {"dim", "source"},
    "models.kmeans": {"k", "max_iter"},
    "models.dbscan": {"eps", "min_pts", "scaling"},
    "models.logreg": {"l2", "epochs", "lr"},
    "models.gbdt": {"iterations", "depth", "lr", "gamma", "bins", "l2_leaf"},
    "cv": {"folds", "aggregation", "families", "variants", "models"},
    "gate": {"model", "family", "variant", "threshold"},
}

_BOOLEANS = {"true": True, "false": False, "yes": True, "no": False, "1": True, "0": False}


@dataclass(frozen=True)
class VictimParams:
    hidden: int = 32
    epochs: int = 200
    lr: float = 0.5


@dataclass(frozen=True)
class KMeansParams:
    k: int = 2
    max_iter: int = 300


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 0.3
    min_pts: int = 10
    scaling: str = "minmax_rms"


@dataclass(frozen=True)
class LogRegParams:
    l2: float = 1e-3
    epochs: int = 300
    lr: float = 0.1


@dataclass(frozen=True)
class GbdtParams:
    iterations: int = 150
    depth: int = 10
    lr: float = 0.1
    gamma: float = 2.0
    bins: int = 64
    l2_leaf: float = 1.0


@dataclass(frozen=True)
class CvParams:
    folds: int = 10
    aggregation: str = "mean"  # mean | pooled
    families: tuple[str, ...] = ("embeddings", "ssim", "histogram")
    variants: tuple[str, ...] = ("original", "cropped_v1", "cropped_v2")
    models: tuple[str, ...] = ("gbdt", "kmeans", "logreg")


@dataclass(frozen=True)
class GateParams:
    model: str = "kmeans"
    family: str = "ssim"
    variant: str = "cropped_v1"
    threshold: str = "auto"  # "auto" or a literal float


@dataclass
class RunConfig:
    master_seed: int
    out_dir: Path
    corpus: CorpusSpec
    crop_boxes: dict[str, CropBox]
    attack: AttackSpec
    victim: VictimParams
    ssim: SsimParams
    embedding: EmbeddingParams
    kmeans: KMeansParams
    dbscan: DbscanParams
    logreg: LogRegParams
    gbdt: GbdtParams
    cv: CvParams
    gate: GateParams
    config_path: Path | None = field(default=None, compare=False)


def _parse_number(raw: str, kind, section: str, key: str):
    """Int/float parsing; floats also accept simple fractions like 8/255."""
    raw = raw.strip()
    try:
        if kind is float and "/" in raw:
            num, den = raw.split("/")
            return float(num) / float(den)
        return kind(raw)
    except (ValueError, ZeroDivisionError):
        raise ConfigurationError(f"[{section}] {key}: cannot parse '{raw}'") from None


def _parse_bool(raw: str, section: str, key: str) -> bool:
    val = _BOOLEANS.get(raw.strip().lower())
    if val is None:
        raise ConfigurationError(f"[{section}] {key}: expected a boolean, got '{raw}'")
    return val


def _parse_box(raw: str, section: str, key: str) -> CropBox:
    parts = [p.strip() for p in raw.split(",")]
    if len(parts) != 4:
        raise ConfigurationError(f"[{section}] {key}: expected 'left,upper,right,lower'")
    try:
        return CropBox(*(int(p) for p in parts))
    except ValueError:
        raise ConfigurationError(f"[{section}] {key}: cannot parse '{raw}'") from None


def _parse_list(raw: str, allowed: tuple[str, ...], section: str, key: str) -> tuple[str, ...]:
    items = tuple(p.strip() for p in raw.split(",") if p.strip())
    if not items:
        return ()
    seen = set()
    for item in items:
        if item not in allowed:
            raise ConfigurationError(f"[{section}] {key}: unknown entry '{item}'")
        if item in seen:
            raise ConfigurationError(f"[{section}] {key}: duplicate entry '{item}'")
        seen.add(item)
    return items


def load_config(path=None, master_seed: int = 42, out_dir="runs/exp") -> RunConfig:
    """Build the run configuration from defaults plus an optional INI file."""
    sections: dict[str, dict[str, str]] = {name: {} for name in _SCHEMA}
    config_path = None
    if path is not None:
        config_path = Path(path)
        if not config_path.is_file():
            raise ConfigurationError(f"config file not found: {config_path}")
        parser = configparser.ConfigParser(interpolation=None, delimiters=("=",))
        try:
            parser.read_string(config_path.read_text(encoding="utf-8"), source=str(config_path))
        except configparser.Error as exc:
            raise ConfigurationError(f"malformed config file: {exc}") from None
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigurationError(f"unknown config section [{section}]")
            for key, value in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigurationError(f"unknown key '{key}' in section [{section}]")
                sections[section][key] = value

    def num(section, key, kind, default):
        raw = sections[section].get(key)
        return default if raw is None else _parse_number(raw, kind, section, key)

    def boolean(section, key, default):
        raw = sections[section].get(key)
        return default if raw is None else _parse_bool(raw, section, key)

    def text(section, key, default, allowed=None):
        raw = sections[section].get(key)
        if raw is None:
            return default
        raw = raw.strip()
        if allowed is not None and raw not in allowed:
            raise ConfigurationError(f"[{section}] {key}: expected one of {allowed}, got '{raw}'")
        return raw

    corpus = CorpusSpec(
        count=num("corpus", "count", int, 600),
        width=num("corpus", "width", int, 400),
        height=num("corpus", "height", int, 369),
        balance=num("corpus", "balance", float, 0.5),
        seed=derive_seed(master_seed, "corpus"),
        noise_sigma=num("corpus", "noise_sigma", float, 0.006),
        motif_amplitude=num("corpus", "motif_amplitude", float, 0.012),
    )
    v1 = sections["corpus"].get("crop_v1")
    v2 = sections["corpus"].get("crop_v2")
    crop_boxes = {
        "cropped_v1": _parse_box(v1, "corpus", "crop_v1") if v1 else CropBox(160, 0, 200, 369),
        "cropped_v2": _parse_box(v2, "corpus", "crop_v2") if v2 else CropBox(160, 50, 200, 319),
    }
    attack = AttackSpec(
        epsilon=num("attack", "epsilon", float, 8 / 255),
        alpha=num("attack", "alpha", float, 2 / 255),
        iterations=num("attack", "iterations", int, 10),
        random_start=boolean("attack", "random_start", True),
    )
    victim = VictimParams(
        hidden=num("attack", "victim_hidden", int, 32),
        epochs=num("attack", "victim_epochs", int, 200),
        lr=num("attack", "victim_lr", float, 0.5),
    )
    ssim = SsimParams(
        window=num("features.ssim", "window", int, 8),
        stride=num("features.ssim", "stride", int, 8),
        k1=num("features.ssim", "k1", float, 0.01),
        k2=num("features.ssim", "k2", float, 0.03),
        data_range=num("features.ssim", "data_range", float, 1.0),
    )
    embedding = EmbeddingParams(
        dim=num("features.embedding", "dim", int, 512),
        seed=derive_seed(master_seed, "embedding"),
        source=text("features.embedding", "source", None),
    )
    cv = CvParams(
        folds=num("cv", "folds", int, 10),
        aggregation=text("cv", "aggregation", "mean", allowed=("mean", "pooled")),
        families=_parse_list(sections["cv"].get("families", ""), FAMILIES, "cv", "families")
        or ("embeddings", "ssim", "histogram"),
        variants=_parse_list(sections["cv"].get("variants", ""), VARIANTS, "cv", "variants")
        or ("original", "cropped_v1", "cropped_v2"),
        models=_parse_list(
            sections["cv"].get("models", ""), ("gbdt", "kmeans", "logreg"), "cv", "models"
        )
        or ("gbdt", "kmeans", "logreg"),
    )
    gate = GateParams(
        model=text("gate", "model", "kmeans", allowed=("kmeans", "logreg", "gbdt", "dbscan")),
        family=text("gate", "family", "ssim", allowed=FAMILIES),
        variant=text("gate", "variant", "cropped_v1", allowed=VARIANTS),
        threshold=text("gate", "threshold", "auto"),
    )
    if gate.threshold != "auto":
        _parse_number(gate.threshold, float, "gate", "threshold")

    return RunConfig(
        master_seed=master_seed,
        out_dir=Path(out_dir),
        corpus=corpus,
        crop_boxes=crop_boxes,
        attack=attack,
        victim=victim,
        ssim=ssim,
        embedding=embedding,
        kmeans=KMeansParams(
            k=num("models.kmeans", "k", int, 2),
            max_iter=num("models.kmeans", "max_iter", int, 300),
        ),
        dbscan=DbscanParams(
            eps=num("models.dbscan", "eps", float, 0.3),
            min_pts=num("models.dbscan", "min_pts", int, 10),
            scaling=text(
                "models.dbscan", "scaling", "minmax_rms",
                allowed=("minmax_rms", "standardize_rms", "none"),
            ),
        ),
        logreg=LogRegParams(
            l2=num("models.logreg", "l2", float, 1e-3),
            epochs=num("models.logreg", "epochs", int, 300),
            lr=num("models.logreg", "lr", float, 0.1),
        ),
        gbdt=GbdtParams(
            iterations=num("models.gbdt", "iterations", int, 150),
            depth=num("models.gbdt", "depth", int, 10),
            lr=num("models.gbdt", "lr", float, 0.1),
            gamma=num("models.gbdt", "gamma", float, 2.0),
            bins=num("models.gbdt", "bins", int, 64),
            l2_leaf=num("models.gbdt", "l2_leaf", float, 1.0),
        ),
        cv=cv,
        gate=gate,
        config_path=config_path,
    )


def config_hash(cfg: RunConfig) -> str:
    """Content hash of everything that influences artifacts (out_dir excluded)."""
    payload = {
        "master_seed": cfg.master_seed,
        "corpus": asdict(cfg.corpus),
        "crop_boxes": {k: asdict(v) for k, v in sorted(cfg.crop_boxes.items())},
        "attack": asdict(cfg.attack),
        "victim": asdict(cfg.victim),
        "ssim": asdict(cfg.ssim),
        "embedding": asdict(cfg.embedding),
        "kmeans": asdict(cfg.kmeans),
        "dbscan": asdict(cfg.dbscan),
        "logreg": asdict(cfg.logreg),
        "gbdt": asdict(cfg.gbdt),
        "cv": asdict(cfg.cv),
        "gate": asdict(cfg.gate),
    }
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()
