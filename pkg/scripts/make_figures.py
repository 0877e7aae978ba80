#!/usr/bin/env python3
"""End-to-end figure pipeline: synthesize one 180-degree-symmetric scene,
export its landscape grid, score field, and four two-stage trajectories
started at longitudes 0/90/180/270, then render all three figure styles
through the poseplots CLI.

Usage: python3 scripts/make_figures.py --out figures/ [--seed 31]
"""

import argparse
import math
import os

import numpy as np

from scorepose.cli import main as scorepose_main
from scorepose.geometry import RelPose
from scorepose.optimizer import Stage1Config, Stage2Config, run_two_stage
from scorepose.runio import export_trajectories, load_scene_set


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", required=True)
    ap.add_argument("--seed", type=int, default=31)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    os.makedirs(args.out, exist_ok=True)

    scenes_path = os.path.join(args.out, "scenes.json")
    rc = scorepose_main(
        ["gen-scenes", "--n", "1", "--seed", str(args.seed), "--descriptor-dim",
         "8", "--symmetry", "bimodal", "--out", scenes_path]
        + (["--force"] if args.force else [])
    )
    if rc:
        raise SystemExit(rc)
    rc = scorepose_main(
        ["sweep", "--scenes", scenes_path, "--scene-id", "0", "--samples", "1",
         "--score-field", "--out", args.out] + (["--force"] if args.force else [])
    )
    if rc:
        raise SystemExit(rc)

    scenes, _ = load_scene_set(scenes_path)
    scene = scenes.scenes[0]
    trials = []
    for lon_deg in (0.0, 90.0, 180.0, 270.0):
        trials.append(
            run_two_stage(
                scene.landscape, scene.landscape, None,
                RelPose(0.0, math.radians(lon_deg), 1.6),
                Stage1Config(seed=args.seed), Stage2Config(),
                rng=np.random.default_rng(args.seed),
            )
        )
    export_trajectories({0: trials}, args.out, {"seed": args.seed}, force=args.force)

    try:
        from poseplots.cli import main as plots_main
    except ImportError:
        print("poseplots is not installed; exports written, skipping rendering")
        return
    grid = os.path.join(args.out, "grid.csv")
    plots_main(["surface", "--in", grid, "--out", os.path.join(args.out, "surface.png")])
    plots_main(
        ["traj", "--in", grid, "--traj", os.path.join(args.out, "trajectories.csv"),
         "--out", os.path.join(args.out, "trajectories.png")]
    )
    plots_main(
        ["quiver", "--in", os.path.join(args.out, "score_field.csv"), "--prob", grid,
         "--out", os.path.join(args.out, "score_field.png")]
    )
    print(f"figures written to {args.out}")


if __name__ == "__main__":
    main()
