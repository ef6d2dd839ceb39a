#!/usr/bin/env python3
"""Run the full tamper-detection experiment end to end and print the tables.

Chains generate -> attack -> featurize -> evaluate -> report -> gate with one
configuration and master seed, then prints both result tables. Stage
artifacts land under --out; rerunning with the same config and seed
reproduces them byte for byte.
"""

import argparse
import sys
import time
from pathlib import Path

from advguard.cli import main as cli_main

STAGES = ("generate", "attack", "featurize", "evaluate", "report", "gate")


def run(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=None, help="INI configuration file")
    parser.add_argument("--seed", type=int, default=42, help="master seed")
    parser.add_argument("--out", default="runs/exp", help="output directory")
    parser.add_argument("--skip-gate", action="store_true", help="stop after report")
    args = parser.parse_args(argv)

    stages = STAGES[:-1] if args.skip_gate else STAGES
    for stage in stages:
        cmd = [stage, "--seed", str(args.seed), "--out", args.out]
        if args.config:
            cmd += ["--config", args.config]
        t0 = time.perf_counter()
        code = cli_main(cmd)
        if code != 0:
            print(f"stage {stage} failed with exit code {code}", file=sys.stderr)
            return code
        print(f"[{stage}] done in {time.perf_counter() - t0:.1f}s")

    report_dir = Path(args.out) / "report"
    for name in ("table1.csv", "table2.csv"):
        print(f"\n--- {name} ---")
        print((report_dir / name).read_text().rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(run())
