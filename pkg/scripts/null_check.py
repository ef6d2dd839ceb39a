#!/usr/bin/env python3
"""Label-permutation sanity check of the evaluation harness.

Builds a corpus, attacks the roster, extracts the per-family features once,
then reruns the cross-validated experiment under shuffled labels. Absent
leakage through the selection/scaler pipeline, every discriminative-power
value stays near zero.
"""

import argparse
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from advguard.attack import pgd_attack_many, train_victim
from advguard.config import load_config
from advguard.evaluation import run_classification_experiment
from advguard.features import extract_features
from advguard.imaging import collect_variant, generate_corpus, load_victim_labels
from advguard.seeding import derive_seed


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--count", type=int, default=600, help="corpus size")
    parser.add_argument("--permutations", type=int, default=10)
    parser.add_argument("--seed", type=int, default=42, help="master seed")
    parser.add_argument("--threshold", type=float, default=0.15)
    args = parser.parse_args(argv)

    t0 = time.perf_counter()
    cfg = load_config(None, master_seed=args.seed)
    workdir = Path(tempfile.mkdtemp(prefix="advguard-null-"))
    spec = replace(cfg.corpus, count=args.count, seed=derive_seed(args.seed, "null-corpus"))
    manifest = generate_corpus(spec, workdir, cfg.crop_boxes)
    ids, labels, images = collect_variant(manifest, "original", workdir, cfg.crop_boxes)
    victim_labels = load_victim_labels(workdir / "victim_labels.csv")
    motif = np.array([victim_labels[i] for i in ids])
    victim = train_victim(images, motif, epochs=60,
                          seed=derive_seed(args.seed, "null-victim"))
    attacked = [k for k, e in enumerate(manifest.entries) if e.label == "attacked"]
    adversarial = pgd_attack_many(victim, [images[k] for k in attacked], motif[attacked],
                                  cfg.attack, seed=derive_seed(args.seed, "null-attack"))
    final = list(images)
    for k, adv in zip(attacked, adversarial):
        final[k] = adv
    features = {
        (fam, "original"): extract_features(ids, final, fam, cfg.ssim, cfg.embedding)
        for fam in ("embeddings", "ssim", "histogram")
    }
    print(f"corpus + features ready in {time.perf_counter() - t0:.0f}s")

    rng = np.random.default_rng(derive_seed(args.seed, "null-permutations"))
    worst = 0.0
    failures = 0
    for perm in range(args.permutations):
        y_null = rng.permutation(labels)
        cells = run_classification_experiment(
            features, y_null, models=("gbdt", "kmeans", "logreg"), folds=10,
            model_params={"gbdt": {"iterations": 40, "depth": 6}},
            seed=derive_seed(args.seed, "null", str(perm)),
        )
        for cell in cells:
            worst = max(worst, cell.dp)
            if cell.dp > args.threshold:
                failures += 1
                print(f"  perm {perm} {cell.family}/{cell.model}: DP={cell.dp:.4f} "
                      f"exceeds {args.threshold}")
    print(f"worst null DP over {args.permutations * 9} cells: {worst:.4f}")
    print("OK" if failures == 0 else f"{failures} violations")
    return 0 if failures == 0 else 1


if __name__ == "__main__":
    sys.exit(run())
