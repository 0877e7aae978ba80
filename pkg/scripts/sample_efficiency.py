#!/usr/bin/env python3
"""Sample-efficiency benchmark: recall versus the number of random starts for
the two-stage optimizer and for energy-only descent, via the bench command.

Usage: python3 scripts/sample_efficiency.py --out bench_out/ [--n-scenes 30]
"""

import argparse
import os

from scorepose.cli import main as scorepose_main
from scorepose.landscape import GeneratorParams
from scorepose.optimizer import Stage1Config, Stage2Config
from scorepose.runio import ExperimentConfig, save_config
from scorepose.scorenet import TrainConfig


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--n-scenes", type=int, default=30)
    ap.add_argument("--seed", type=int, default=500)
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--oracle", action="store_true", help="skip training")
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    cfg = ExperimentConfig(
        seed=args.seed,
        n_scenes=args.n_scenes,
        generator=GeneratorParams(symmetry_mode="bimodal", depth_ratio=1.0),
        train=TrainConfig(epochs=args.epochs, seed=0),
        stage1=Stage1Config(seed=3),
        stage2=Stage2Config(),
        score_source="oracle" if args.oracle else "train",
        bench_trial_counts=(1, 2, 4, 8),
    )
    cfg_path = os.path.join(args.out, "config.json")
    save_config(cfg, cfg_path, force=args.force)
    rc = scorepose_main(
        ["bench", "--config", cfg_path, "--out", args.out]
        + (["--force"] if args.force else [])
    )
    raise SystemExit(rc)


if __name__ == "__main__":
    main()
