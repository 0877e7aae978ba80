"""Plot commands over the primary component's exports.

    poseplots surface --in grid.csv --out surface.png
    poseplots traj    --in grid.csv --traj trajectories.csv --out traj.png
    poseplots quiver  --in score_field.csv [--prob grid.csv] --out field.png
"""

from __future__ import annotations

import argparse
import sys

from .inputs import (
    MissingColumnError,
    SchemaMismatchError,
    load_grid,
    load_score_field,
    load_trajectories,
)
from .plots import StyleOptions, plot_quiver, plot_surface, plot_trajectories, save


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="poseplots", description=__doc__)
    sub = p.add_subparsers(dest="kind", required=True)

    s = sub.add_parser("surface", help="3-D landscape surface")
    s.add_argument("--in", dest="grid", required=True, help="grid CSV export")
    s.add_argument("--meta", help="metadata JSON (defaults to <in>.json)")
    s.add_argument("--out", required=True)
    s.add_argument("--dpi", type=int, default=120)

    t = sub.add_parser("traj", help="2-D landscape with trajectory overlays")
    t.add_argument("--in", dest="grid", required=True, help="grid CSV export")
    t.add_argument("--traj", required=True, help="trajectories CSV export")
    t.add_argument("--scene", type=int, default=None, help="scene id filter")
    t.add_argument("--meta", help="grid metadata JSON")
    t.add_argument("--traj-meta", help="trajectory metadata JSON")
    t.add_argument("--out", required=True)
    t.add_argument("--dpi", type=int, default=120)

    q = sub.add_parser("quiver", help="score-field arrows over a heatmap")
    q.add_argument("--in", dest="field", required=True, help="score-field CSV export")
    q.add_argument("--prob", help="grid CSV rendered as a probability heatmap")
    q.add_argument("--meta", help="field metadata JSON")
    q.add_argument("--out", required=True)
    q.add_argument("--dpi", type=int, default=120)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    style = StyleOptions(dpi=args.dpi)
    try:
        if args.kind == "surface":
            fig = plot_surface(load_grid(args.grid, args.meta), style)
        elif args.kind == "traj":
            grid = load_grid(args.grid, args.meta)
            traces = load_trajectories(args.traj, args.traj_meta, scene=args.scene)
            fig, _endpoints = plot_trajectories(grid, traces, style)
        else:
            fieldData = load_score_field(args.field, args.meta)
            prob = load_grid(args.prob) if args.prob else None
            fig = plot_quiver(fieldData, prob, style)
        save(fig, args.out, style)
    except (SchemaMismatchError, MissingColumnError, FileNotFoundError) as e:
        print(f"poseplots: error: {e}", file=sys.stderr)
        return 3
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
