"""Command-line pipeline: generate -> attack -> featurize -> evaluate -> report -> gate.

Every stage writes its artifacts plus a provenance record (config hash and
content hash) under its own directory; downstream stages refuse to run on
artifacts produced under a different configuration. All randomness derives
from the single master seed, so a full pipeline rerun is byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import shutil
import sys
import traceback
from pathlib import Path

import numpy as np

from . import __version__
from .attack import VICTIM_MAGIC, load_victim, pgd_attack_many, save_victim, train_victim
from .config import RunConfig, config_hash, load_config
from .detectors import gbdt_fit, kmeans_fit, logreg_fit
from .detectors.modelio import (
    DETECTOR_MAGIC,
    describe_fields,
    detector_fields,
    detector_from_fields,
    read_blob,
    write_blob,
)
from .errors import (
    AdvGuardError,
    ConfigurationError,
    PipelineError,
    UnsupportedDetectorError,
)
from .evaluation import (
    TABLE2_METRICS,
    Table1Cell,
    Table2Cell,
    run_classification_experiment,
    run_clustering_experiment,
    select_top_k,
)
from .features import load_feature_matrix, save_feature_matrix
from .guard import GateBundle, batch_gate, calibrate_threshold, detector_scores, save_verdicts
from .imaging import (
    collect_variant,
    generate_corpus,
    load_manifest,
    load_victim_labels,
    save_manifest,
    save_victim_labels,
)
from .seeding import derive_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

_STAGE_DIRS = {
    "generate": "corpus",
    "attack": "attacked",
    "featurize": "features",
    "evaluate": "report",
    "gate": "gate",
}


# ---------------------------------------------------------------------------
# provenance
# ---------------------------------------------------------------------------


def _content_hash(stage_dir: Path) -> str:
    h = hashlib.sha256()
    for p in sorted(stage_dir.rglob("*")):
        if p.name == "provenance.json" or p.is_dir():
            continue
        h.update(str(p.relative_to(stage_dir)).encode())
        h.update(p.read_bytes())
    return h.hexdigest()


def _write_provenance(stage_dir: Path, stage: str, cfg_hash: str) -> None:
    record = {
        "stage": stage,
        "config_hash": cfg_hash,
        "content_hash": _content_hash(stage_dir),
    }
    (stage_dir / "provenance.json").write_text(
        json.dumps(record, sort_keys=True) + "\n", encoding="utf-8"
    )


def _require_stage(cfg: RunConfig, stage: str, cfg_hash: str) -> Path:
    stage_dir = cfg.out_dir / _STAGE_DIRS[stage]
    record_path = stage_dir / "provenance.json"
    if not record_path.is_file():
        raise PipelineError(
            f"no artifacts found under {stage_dir}; run the {stage} stage first"
        )
    record = json.loads(record_path.read_text(encoding="utf-8"))
    if record.get("config_hash") != cfg_hash:
        raise PipelineError(
            f"artifacts under {stage_dir} were produced with a different configuration; "
            f"re-run the {stage} stage"
        )
    return stage_dir


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------


def cmd_generate(cfg: RunConfig) -> int:
    stage_dir = cfg.out_dir / _STAGE_DIRS["generate"]
    manifest = generate_corpus(cfg.corpus, stage_dir, cfg.crop_boxes)
    _write_provenance(stage_dir, "generate", config_hash(cfg))
    n_attacked = sum(e.label == "attacked" for e in manifest.entries)
    print(
        f"generated {len(manifest)} images ({n_attacked} rostered for attack) "
        f"under {stage_dir}"
    )
    return EXIT_OK


def cmd_attack(cfg: RunConfig) -> int:
    cfg_hash = config_hash(cfg)
    corpus_dir = _require_stage(cfg, "generate", cfg_hash)
    manifest = load_manifest(corpus_dir / "manifest.csv")
    victim_labels = load_victim_labels(corpus_dir / "victim_labels.csv")

    ids, _, images = collect_variant(manifest, "original", corpus_dir, cfg.crop_boxes)
    motif = np.array([victim_labels[i] for i in ids])
    victim = train_victim(
        images,
        motif,
        epochs=cfg.victim.epochs,
        seed=derive_seed(cfg.master_seed, "victim"),
        hidden=cfg.victim.hidden,
        lr=cfg.victim.lr,
    )

    stage_dir = cfg.out_dir / _STAGE_DIRS["attack"]
    images_dir = stage_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    attacked_idx = [k for k, e in enumerate(manifest.entries) if e.label == "attacked"]
    adversarial = pgd_attack_many(
        victim,
        [images[k] for k in attacked_idx],
        motif[attacked_idx],
        cfg.attack,
        seed=derive_seed(cfg.master_seed, "attack"),
    )
    adv_by_index = dict(zip(attacked_idx, adversarial))
    from .imaging import save_image

    for k, entry in enumerate(manifest.entries):
        target = stage_dir / entry.path
        if k in adv_by_index:
            save_image(adv_by_index[k], target)
        else:
            target.parent.mkdir(parents=True, exist_ok=True)
            shutil.copyfile(corpus_dir / entry.path, target)

    save_manifest(manifest, stage_dir / "manifest.csv")
    save_victim_labels(victim_labels, stage_dir / "victim_labels.csv")
    save_victim(victim, stage_dir / "victim.bin")
    _write_provenance(stage_dir, "attack", cfg_hash)
    print(
        f"attacked {len(attacked_idx)} of {len(manifest)} images "
        f"(epsilon={cfg.attack.epsilon:.6g}) under {stage_dir}"
    )
    return EXIT_OK


def _feature_path(features_dir: Path, family: str, variant: str) -> Path:
    return features_dir / f"{family}__{variant}.csv"


def cmd_featurize(cfg: RunConfig) -> int:
    cfg_hash = config_hash(cfg)
    attacked_dir = _require_stage(cfg, "attack", cfg_hash)
    manifest = load_manifest(attacked_dir / "manifest.csv")
    stage_dir = cfg.out_dir / _STAGE_DIRS["featurize"]
    stage_dir.mkdir(parents=True, exist_ok=True)
    from .features import extract_features, ingest_embeddings

    for variant in cfg.cv.variants:  # load each variant once, extract all families
        ids, _, images = collect_variant(manifest, variant, attacked_dir, cfg.crop_boxes)
        for family in cfg.cv.families:
            if family == "embeddings" and cfg.embedding.source:
                src = cfg.embedding.source.replace("{variant}", variant)
                fm = ingest_embeddings(src, manifest)
            else:
                fm = extract_features(ids, images, family, cfg.ssim, cfg.embedding)
            save_feature_matrix(fm, _feature_path(stage_dir, family, variant))
    _write_provenance(stage_dir, "featurize", cfg_hash)
    print(
        f"wrote {len(cfg.cv.families) * len(cfg.cv.variants)} feature matrices "
        f"under {stage_dir}"
    )
    return EXIT_OK


def _load_feature_map(cfg: RunConfig, features_dir: Path, manifest):
    features = {}
    for family in cfg.cv.families:
        for variant in cfg.cv.variants:
            path = _feature_path(features_dir, family, variant)
            if not path.is_file():
                raise PipelineError(
                    f"feature file {path} is missing; run the featurize stage first"
                )
            fm = load_feature_matrix(path)
            if fm.row_ids != manifest.ids():
                raise PipelineError(
                    f"feature file {path} does not match the manifest row order"
                )
            features[(family, variant)] = fm
    return features


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.4f}"


def write_table1_cells(cells: list[Table1Cell], path: Path) -> None:
    lines = ["family,variant,model,mean_auc,dp"]
    for c in cells:
        lines.append(f"{c.family},{c.variant},{c.model},{repr(c.mean_auc)},{repr(c.dp)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_table2_cells(cells: list[Table2Cell], path: Path) -> None:
    lines = [
        "family,variant,n_clusters,n_noise,homogeneity,completeness,"
        "v_measure,adjusted_rand,silhouette"
    ]
    for c in cells:
        sil = repr(c.silhouette) if c.silhouette is not None else ""
        lines.append(
            f"{c.family},{c.variant},{c.n_clusters},{c.n_noise},{repr(c.homogeneity)},"
            f"{repr(c.completeness)},{repr(c.v_measure)},{repr(c.adjusted_rand)},{sil}"
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_paper_tables(
    t1: list[Table1Cell], t2: list[Table2Cell], cfg: RunConfig, out_dir: Path
) -> None:
    """Fixed-shape renderings: 9 rows x 3 model columns and 7 metrics x 9 columns."""
    by_cell = {(c.family, c.variant, c.model): c for c in t1}
    lines = ["family,variant,gbdt_focal,kmeans,logistic_regression"]
    for family in cfg.cv.families:
        for variant in cfg.cv.variants:
            row = [family, variant]
            for model in ("gbdt", "kmeans", "logreg"):
                cell = by_cell.get((family, variant, model))
                row.append(_format_cell(cell.dp if cell else None))
            lines.append(",".join(row))
    (out_dir / "table1.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    by_cell2 = {(c.family, c.variant): c for c in t2}
    columns = [(f, v) for f in cfg.cv.families for v in cfg.cv.variants]
    header = ["metric"] + [f"{f}__{v}" for f, v in columns]
    rows = [",".join(header)]
    getters = {
        "n_clusters": lambda c: c.n_clusters,
        "n_noise": lambda c: c.n_noise,
        "homogeneity": lambda c: c.homogeneity,
        "completeness": lambda c: c.completeness,
        "v_measure": lambda c: c.v_measure,
        "adjusted_rand_index": lambda c: c.adjusted_rand,
        "silhouette_coefficient": lambda c: c.silhouette,
    }
    for metric in TABLE2_METRICS:
        row = [metric]
        for key in columns:
            cell = by_cell2.get(key)
            row.append(_format_cell(getters[metric](cell)) if cell else "")
        rows.append(",".join(row))
    (out_dir / "table2.csv").write_text("\n".join(rows) + "\n", encoding="utf-8")


def cmd_evaluate(cfg: RunConfig) -> int:
    cfg_hash = config_hash(cfg)
    attacked_dir = _require_stage(cfg, "attack", cfg_hash)
    features_dir = _require_stage(cfg, "featurize", cfg_hash)
    manifest = load_manifest(attacked_dir / "manifest.csv")
    labels = np.array([1 if e.label == "attacked" else 0 for e in manifest.entries])
    features = _load_feature_map(cfg, features_dir, manifest)

    model_params = {
        "kmeans": {"k": cfg.kmeans.k, "max_iter": cfg.kmeans.max_iter},
        "logreg": {"l2": cfg.logreg.l2, "epochs": cfg.logreg.epochs, "lr": cfg.logreg.lr},
        "gbdt": {
            "iterations": cfg.gbdt.iterations,
            "depth": cfg.gbdt.depth,
            "lr": cfg.gbdt.lr,
            "gamma": cfg.gbdt.gamma,
            "bins": cfg.gbdt.bins,
            "l2_leaf": cfg.gbdt.l2_leaf,
        },
    }
    t1 = run_classification_experiment(
        features,
        labels,
        models=cfg.cv.models,
        folds=cfg.cv.folds,
        aggregation=cfg.cv.aggregation,
        model_params=model_params,
        seed=derive_seed(cfg.master_seed, "cv"),
    )
    t2 = run_clustering_experiment(
        features,
        labels,
        eps=cfg.dbscan.eps,
        min_pts=cfg.dbscan.min_pts,
        scaling=cfg.dbscan.scaling,
    )

    stage_dir = cfg.out_dir / _STAGE_DIRS["evaluate"]
    stage_dir.mkdir(parents=True, exist_ok=True)
    write_table1_cells(t1, stage_dir / "table1_cells.csv")
    write_table2_cells(t2, stage_dir / "table2_cells.csv")
    attacked_prov = json.loads((attacked_dir / "provenance.json").read_text())
    metadata = {
        "master_seed": cfg.master_seed,
        "config_hash": cfg_hash,
        "corpus_hash": attacked_prov["content_hash"],
        "corpus": {
            "count": cfg.corpus.count,
            "width": cfg.corpus.width,
            "height": cfg.corpus.height,
            "balance": cfg.corpus.balance,
            "noise_sigma": cfg.corpus.noise_sigma,
            "motif_amplitude": cfg.corpus.motif_amplitude,
        },
        "attack": {
            "epsilon": cfg.attack.epsilon,
            "alpha": cfg.attack.alpha,
            "iterations": cfg.attack.iterations,
            "random_start": cfg.attack.random_start,
        },
        "cv": {"folds": cfg.cv.folds, "aggregation": cfg.cv.aggregation},
        "dbscan": {"eps": cfg.dbscan.eps, "min_pts": cfg.dbscan.min_pts,
                   "scaling": cfg.dbscan.scaling},
    }
    (stage_dir / "metadata.json").write_text(
        json.dumps(metadata, sort_keys=True, indent=1) + "\n", encoding="utf-8"
    )
    _write_provenance(stage_dir, "evaluate", cfg_hash)
    print(f"evaluated {len(t1)} classification cells and {len(t2)} clustering cells")
    for c in t1:
        print(f"  table1 {c.family}/{c.variant}/{c.model}: DP={c.dp:.4f}")
    return EXIT_OK


def cmd_report(cfg: RunConfig, layout: str = "paper") -> int:
    cfg_hash = config_hash(cfg)
    stage_dir = _require_stage(cfg, "evaluate", cfg_hash)
    t1 = _read_table1_cells(stage_dir / "table1_cells.csv")
    t2 = _read_table2_cells(stage_dir / "table2_cells.csv")
    if layout == "paper":
        write_paper_tables(t1, t2, cfg, stage_dir)
        _write_provenance(stage_dir, "evaluate", cfg_hash)
        print(f"wrote {stage_dir / 'table1.csv'} and {stage_dir / 'table2.csv'}")
    for line in (stage_dir / "table1_cells.csv").read_text().splitlines():
        print(line)
    return EXIT_OK


def _read_table1_cells(path: Path) -> list[Table1Cell]:
    cells = []
    for line in path.read_text().splitlines()[1:]:
        family, variant, model, mean_auc, dp = line.split(",")
        cells.append(Table1Cell(family, variant, model, float(dp), float(mean_auc), ()))
    return cells


def _read_table2_cells(path: Path) -> list[Table2Cell]:
    cells = []
    for line in path.read_text().splitlines()[1:]:
        parts = line.split(",")
        cells.append(
            Table2Cell(
                parts[0], parts[1], int(parts[2]), int(parts[3]), float(parts[4]),
                float(parts[5]), float(parts[6]), float(parts[7]),
                float(parts[8]) if parts[8] else None,
            )
        )
    return cells


def cmd_gate(cfg: RunConfig, target=None) -> int:
    cfg_hash = config_hash(cfg)
    attacked_dir = _require_stage(cfg, "attack", cfg_hash)
    features_dir = _require_stage(cfg, "featurize", cfg_hash)
    if cfg.gate.model == "dbscan":
        raise UnsupportedDetectorError(
            "gate.model=dbscan: transductive clustering cannot score new images; "
            "pick kmeans, logreg, or gbdt"
        )
    manifest = load_manifest(attacked_dir / "manifest.csv")
    labels = np.array([1 if e.label == "attacked" else 0 for e in manifest.entries])
    path = _feature_path(features_dir, cfg.gate.family, cfg.gate.variant)
    if not path.is_file():
        raise PipelineError(f"feature file {path} is missing; run the featurize stage first")
    fm = load_feature_matrix(path)
    if fm.row_ids != manifest.ids():
        raise PipelineError(f"feature file {path} does not match the manifest row order")

    cols = select_top_k(fm.values, labels)
    X = fm.values[:, cols]
    fit_seed = derive_seed(cfg.master_seed, "gate")
    if cfg.gate.model == "kmeans":
        model = kmeans_fit(X, k=cfg.kmeans.k, seed=fit_seed, max_iter=cfg.kmeans.max_iter)
    elif cfg.gate.model == "logreg":
        model = logreg_fit(X, labels, l2=cfg.logreg.l2, epochs=cfg.logreg.epochs,
                           lr=cfg.logreg.lr)
    else:
        model = gbdt_fit(
            X, labels, iterations=cfg.gbdt.iterations, depth=cfg.gbdt.depth,
            learning_rate=cfg.gbdt.lr, gamma=cfg.gbdt.gamma, n_bins=cfg.gbdt.bins,
            l2_leaf=cfg.gbdt.l2_leaf,
        )
    scores = detector_scores(cfg.gate.model, model, X)
    threshold, side = calibrate_threshold(scores, labels)
    if cfg.gate.threshold != "auto":
        threshold = float(cfg.gate.threshold)
    bundle = GateBundle(
        kind=cfg.gate.model,
        model=model,
        family=cfg.gate.family,
        variant=cfg.gate.variant,
        crop_box=None if cfg.gate.variant == "original" else cfg.crop_boxes[cfg.gate.variant],
        selected_columns=cols,
        threshold=threshold,
        tampered_side=side,
        input_width=cfg.corpus.width,
        input_height=cfg.corpus.height,
        ssim_params=cfg.ssim,
        embedding_params=cfg.embedding,
    )
    victim = load_victim(attacked_dir / "victim.bin")

    stage_dir = cfg.out_dir / _STAGE_DIRS["gate"]
    stage_dir.mkdir(parents=True, exist_ok=True)
    save_gate_bundle(bundle, stage_dir / "detector.bin")

    target_path = Path(target) if target else attacked_dir / "manifest.csv"
    target_manifest = load_manifest(target_path)
    verdicts, summary = batch_gate(target_manifest, bundle, victim,
                                   root=target_path.parent)
    save_verdicts(verdicts, stage_dir / "verdicts.csv")
    (stage_dir / "summary.json").write_text(
        json.dumps(summary, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_provenance(stage_dir, "gate", cfg_hash)
    print(
        f"gated {len(verdicts)} images: {summary['tampered']} tampered, "
        f"{summary['clean']} clean, {summary['errors']} errors"
    )
    return EXIT_OK


def save_gate_bundle(bundle: GateBundle, path) -> None:
    fields = detector_fields(bundle.model)
    fields = [("detector." + k, v) for k, v in fields]
    box = bundle.crop_box
    fields += [
        ("gate.kind", bundle.kind),
        ("gate.family", bundle.family),
        ("gate.variant", bundle.variant),
        ("gate.has_crop", int(box is not None)),
        ("gate.crop", np.array(
            [box.left, box.upper, box.right, box.lower] if box else [0, 0, 0, 0],
            dtype=np.int64,
        )),
        ("gate.selected_columns", np.asarray(bundle.selected_columns, dtype=np.int64)),
        ("gate.threshold", bundle.threshold),
        ("gate.tampered_side", bundle.tampered_side),
        ("gate.input_width", bundle.input_width),
        ("gate.input_height", bundle.input_height),
        ("gate.ssim.window", bundle.ssim_params.window),
        ("gate.ssim.stride", bundle.ssim_params.stride),
        ("gate.ssim.k1", bundle.ssim_params.k1),
        ("gate.ssim.k2", bundle.ssim_params.k2),
        ("gate.ssim.data_range", bundle.ssim_params.data_range),
        ("gate.embedding.dim", bundle.embedding_params.dim),
        ("gate.embedding.seed", bundle.embedding_params.seed),
    ]
    write_blob(fields, path)


def load_gate_bundle(path) -> GateBundle:
    from .features import EmbeddingParams, SsimParams
    from .imaging import CropBox

    raw = read_blob(path)
    det = {k[len("detector."):]: v for k, v in raw.items() if k.startswith("detector.")}
    model = detector_from_fields(det)
    box = None
    if raw["gate.has_crop"]:
        l, u, r, lo = (int(v) for v in raw["gate.crop"])
        box = CropBox(l, u, r, lo)
    return GateBundle(
        kind=raw["gate.kind"],
        model=model,
        family=raw["gate.family"],
        variant=raw["gate.variant"],
        crop_box=box,
        selected_columns=raw["gate.selected_columns"],
        threshold=float(raw["gate.threshold"]),
        tampered_side=int(raw["gate.tampered_side"]),
        input_width=int(raw["gate.input_width"]),
        input_height=int(raw["gate.input_height"]),
        ssim_params=SsimParams(
            window=int(raw["gate.ssim.window"]),
            stride=int(raw["gate.ssim.stride"]),
            k1=float(raw["gate.ssim.k1"]),
            k2=float(raw["gate.ssim.k2"]),
            data_range=float(raw["gate.ssim.data_range"]),
        ),
        embedding_params=EmbeddingParams(
            dim=int(raw["gate.embedding.dim"]), seed=int(raw["gate.embedding.seed"])
        ),
    )


def cmd_describe(path) -> int:
    path = Path(path)
    if not path.is_file():
        raise PipelineError(f"model file not found: {path}")
    head = path.read_bytes()[:8]
    if head == VICTIM_MAGIC:
        victim = load_victim(path)
        print(f"victim perceptron: input {victim.input_width}x{victim.input_height}, "
              f"hidden {victim.hidden}, seed {victim.seed}")
        return EXIT_OK
    if head == DETECTOR_MAGIC:
        print(describe_fields(read_blob(path)))
        return EXIT_OK
    raise PipelineError(f"{path}: unrecognized model file magic")


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="advguard",
        description="Two-layer tamper-screening pipeline for image classifiers",
    )
    parser.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI configuration file")
    common.add_argument("--seed", type=int, default=42, help="master seed (default 42)")
    common.add_argument("--out", default="runs/exp", help="pipeline output directory")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write the synthetic corpus")
    sub.add_parser("attack", parents=[common], help="train the victim and perturb the roster")
    sub.add_parser("featurize", parents=[common], help="extract all feature matrices")
    sub.add_parser("evaluate", parents=[common], help="run both experiment harnesses")
    rep = sub.add_parser("report", parents=[common], help="render result tables")
    rep.add_argument("--layout", choices=("paper", "long"), default="paper")
    gate = sub.add_parser("gate", parents=[common], help="fit the gate and screen a manifest")
    gate.add_argument("--target", default=None, help="manifest of images to screen")
    desc = sub.add_parser("describe", help="print the parameters of a model file")
    desc.add_argument("path")
    return parser


def main(argv=None) -> int:
    try:
        args = _build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        if args.command == "describe":
            return cmd_describe(args.path)
        cfg = load_config(args.config, master_seed=args.seed, out_dir=args.out)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "attack":
            return cmd_attack(cfg)
        if args.command == "featurize":
            return cmd_featurize(cfg)
        if args.command == "evaluate":
            return cmd_evaluate(cfg)
        if args.command == "report":
            return cmd_report(cfg, layout=args.layout)
        if args.command == "gate":
            return cmd_gate(cfg, target=args.target)
        raise ConfigurationError(f"unknown command {args.command}")
    except (ConfigurationError, UnsupportedDetectorError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AdvGuardError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception:
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
