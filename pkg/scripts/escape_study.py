#!/usr/bin/env python3
"""Escape study: from the symmetric false mode, compare energy-only descent
against the two-stage optimizer with a trained score network.

Usage: python3 scripts/escape_study.py [--scenes 10] [--epochs 40] [--seed 2024]
"""

import argparse
import math

import numpy as np

from scorepose.geometry import rel_as_pose, rotation_error
from scorepose.landscape import GeneratorParams, make_scene_set
from scorepose.optimizer import Stage1Config, Stage2Config, run_stage2, run_two_stage
from scorepose.scorenet import TrainConfig, make_score_network, train


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--scenes", type=int, default=10)
    ap.add_argument("--epochs", type=int, default=40)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--depth-ratio", type=float, default=0.9)
    args = ap.parse_args()

    params = GeneratorParams(symmetry_mode="bimodal", depth_ratio=args.depth_ratio)
    scenes = make_scene_set(args.scenes, descriptor_dim=32, params=params, seed=args.seed)
    net = make_score_network(32, np.random.default_rng(0))
    state = train(net, scenes, TrainConfig(epochs=args.epochs, seed=0))
    print(f"trained score net: final loss {state.loss_curve[-1]:.4f}")

    cfg1, cfg2 = Stage1Config(), Stage2Config()
    wins = {"stage2_only": 0, "two_stage": 0}
    print(f"{'scene':>5} {'stage2-only rot':>16} {'two-stage rot':>14}")
    for sc in scenes.scenes:
        gt, init = sc.landscape.gt, sc.landscape.false_mode()
        alone = run_stage2(sc.landscape, None, init, cfg2)
        rng = np.random.default_rng([77, sc.scene_id])
        both = run_two_stage(net, sc.landscape, sc.descriptor, init, cfg1, cfg2, rng=rng)
        r_alone = math.degrees(rotation_error(rel_as_pose(alone.final_pose), rel_as_pose(gt)))
        r_both = math.degrees(rotation_error(rel_as_pose(both.final_pose), rel_as_pose(gt)))
        wins["stage2_only"] += r_alone < 30
        wins["two_stage"] += r_both < 30
        print(f"{sc.scene_id:>5} {r_alone:>15.1f}deg {r_both:>13.1f}deg")
    n = len(scenes)
    print(
        f"\nsuccess (rot < 30 deg): stage2-only {wins['stage2_only']}/{n}, "
        f"two-stage {wins['two_stage']}/{n}"
    )


if __name__ == "__main__":
    main()
