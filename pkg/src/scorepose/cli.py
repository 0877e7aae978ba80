"""Command-line surface: scene generation, training, estimation, multi-view
runs, landscape sweeps, theory verification, and benchmarking.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import runio
from .landscape import GeneratorParams, grid_sweep, make_scene_set, oracle_score
from .runio import OutputExistsError
from .metrics import Thresholds, evaluate, format_table
from .multiview import (
    ABLATIONS,
    MultiviewParams,
    make_multiview_scene,
    multiview_pipeline,
    view_recall,
)
from .optimizer import (
    Stage1Config,
    Stage2Config,
    canonical_inits,
    multi_start,
    random_inits,
)
from .scorenet import TrainConfig, make_score_network, make_energy_network, train
from .theory import (
    DiscreteConditional,
    default_grid,
    gradient_checks,
    optimal_score_posterior,
    optimal_score_prior,
    verify_decay,
    verify_lemma2,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VERIFY = 2
EXIT_RUNTIME = 3


class CliParser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; remap to the documented code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> CliParser:
    p = CliParser(prog="scorepose", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-scenes", help="synthesize a scene set", parents=[])
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--descriptor-dim", type=int, default=32)
    g.add_argument("--symmetry", choices=("none", "bimodal", "plateau"), default="none")
    g.add_argument("--depth-ratio", type=float, default=0.9)
    g.add_argument("--noise-std", type=float, default=0.0)
    g.add_argument("--roughness-amp", type=float, default=0.0)
    g.add_argument("--out", required=True)
    g.add_argument("--force", action="store_true")

    t = sub.add_parser("train", help="train a score or energy network")
    t.add_argument("--scenes", required=True)
    t.add_argument("--mode", choices=("score", "energy"), default="score")
    t.add_argument("--epochs", type=int, default=60)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--batch", type=int, default=256)
    t.add_argument("--steps-per-epoch", type=int, default=50)
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--width", type=int, default=256)
    t.add_argument("--blocks", type=int, default=3)
    t.add_argument("--checkpoint", required=True, help="output checkpoint path")
    t.add_argument("--resume", help="checkpoint to resume from")
    t.add_argument("--force", action="store_true")

    e = sub.add_parser("estimate", help="two-view multi-start estimation")
    e.add_argument("--scenes", required=True)
    e.add_argument("--checkpoint", help="score-network checkpoint")
    e.add_argument("--oracle-score", action="store_true", help="use the exact score")
    e.add_argument("--inits", default="canonical9", help="canonical9 or random:N")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--stage1-iters", type=int, default=50)
    e.add_argument("--stage2-iters", type=int, default=50)
    e.add_argument("--gamma2", type=float, default=0.3)
    e.add_argument("--out", required=True)
    e.add_argument("--force", action="store_true")

    m = sub.add_parser("multiview", help="multi-view pipeline with ablations")
    m.add_argument("--scenes", required=True)
    m.add_argument("--views", type=int, required=True)
    m.add_argument(
        "--ablation", choices=("full", "no-stage1", "no-stage2"), default="full"
    )
    m.add_argument("--n-scenes", type=int, help="defaults to the scene-set size")
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.add_argument("--force", action="store_true")

    s = sub.add_parser("sweep", help="export a landscape grid for plotting")
    s.add_argument("--scenes", required=True)
    s.add_argument("--scene-id", type=int, required=True)
    s.add_argument("--lat-step", type=float, default=8.0)
    s.add_argument("--lon-step", type=float, default=12.0)
    s.add_argument("--samples", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument(
        "--score-field",
        action="store_true",
        help="also export the oracle (or checkpoint) score field",
    )
    s.add_argument("--checkpoint", help="score net for the field export")
    s.add_argument("--out", required=True)
    s.add_argument("--force", action="store_true")

    v = sub.add_parser("verify", help="numerical theory checks")
    v.add_argument(
        "--check",
        choices=("decay", "variance", "lemma2", "gradients", "all"),
        default="all",
    )
    v.add_argument("--seed", type=int, default=0)

    b = sub.add_parser("bench", help="sample-efficiency benchmark")
    b.add_argument("--config", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--force", action="store_true")
    return p


def _generator(args) -> GeneratorParams:
    return GeneratorParams(
        symmetry_mode=args.symmetry,
        depth_ratio=args.depth_ratio,
        noise_std=args.noise_std,
        roughness_amp=args.roughness_amp,
    )


def cmd_gen_scenes(args) -> int:
    gen = _generator(args)
    scenes = make_scene_set(args.n, args.descriptor_dim, gen, args.seed)
    runio.save_scene_set(scenes, args.out, args.seed, gen, args.force)
    print(f"wrote {args.out} ({args.n} scenes, descriptor_dim={args.descriptor_dim})")
    return EXIT_OK


def cmd_train(args) -> int:
    scenes, _meta = runio.load_scene_set(args.scenes)
    cfg = TrainConfig(
        lr=args.lr,
        batch_size=args.batch,
        epochs=args.epochs,
        steps_per_epoch=args.steps_per_epoch,
        seed=args.seed,
    )
    state = None
    if args.resume:
        net, mode, cfg_loaded, state = runio.load_checkpoint(args.resume)
        if mode != args.mode:
            raise RuntimeError(f"checkpoint mode {mode!r} != requested {args.mode!r}")
        cfg = cfg_loaded
        cfg.epochs = args.epochs
    else:
        rng = np.random.default_rng(args.seed)
        maker = make_score_network if args.mode == "score" else make_energy_network
        net = maker(scenes.descriptor_dim, rng, width=args.width, blocks=args.blocks)
    state = train(net, scenes, cfg, mode=args.mode, state=state)
    runio.save_checkpoint(args.checkpoint, net, args.mode, cfg, state, args.force)
    print(
        f"trained {args.mode} net for {state.epochs_done} epochs, "
        f"final loss {state.loss_curve[-1]:.6f}, wrote {args.checkpoint}"
    )
    return EXIT_OK


def _load_inits(strategy: str, seed: int, scene_id: int):
    kind, n = runio.parse_init_strategy(strategy)
    if kind == "canonical9":
        return canonical_inits()
    return random_inits(n, np.random.default_rng([seed, scene_id]))


def cmd_estimate(args) -> int:
    scenes, meta = runio.load_scene_set(args.scenes)
    if args.oracle_score:
        score_for = lambda scene: scene.landscape
    elif args.checkpoint:
        net, mode, _cfg, _state = runio.load_checkpoint(args.checkpoint)
        if mode != "score":
            raise RuntimeError("estimate needs a score-mode checkpoint")
        score_for = lambda scene: net
    else:
        raise RuntimeError("estimate needs --checkpoint or --oracle-score")
    cfg1 = Stage1Config(
        gamma=(0.0, args.gamma2, 0.0), iters=args.stage1_iters, seed=args.seed
    )
    cfg2 = Stage2Config(iters=args.stage2_iters)
    trials = {}
    gts = {}
    for scene in scenes.scenes:
        inits = _load_inits(args.inits, args.seed, scene.scene_id)
        results, _best = multi_start(scene, score_for(scene), inits, cfg1, cfg2)
        trials[scene.scene_id] = results
        gts[scene.scene_id] = scene.landscape.gt
    report = evaluate(trials, gts)
    prov = runio.provenance(
        {
            "scenes": meta["provenance"],
            "inits": args.inits,
            "stage1_iters": args.stage1_iters,
            "stage2_iters": args.stage2_iters,
            "gamma2": args.gamma2,
            "oracle": bool(args.oracle_score),
        },
        args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    runio.export_trajectories(trials, args.out, prov, args.force)
    runio.export_metrics(report, args.out, prov, force=args.force)
    print(format_table(report), end="")
    return EXIT_OK


def cmd_multiview(args) -> int:
    scenes, meta = runio.load_scene_set(args.scenes)
    gen = meta.get("generator") or {}
    params = MultiviewParams(
        symmetry_mode=gen.get("symmetry_mode", "bimodal"),
        depth_ratio=gen.get("depth_ratio", 0.9),
        noise_std=gen.get("noise_std", 0.0),
    )
    n_scenes = args.n_scenes or len(scenes)
    ablation = args.ablation.replace("-", "_")
    cfg1 = Stage1Config(seed=args.seed)
    cfg2 = Stage2Config(iters=100)
    base_seed = meta["provenance"]["seed"]
    results = []
    per_scene = []
    for k in range(n_scenes):
        scene = make_multiview_scene(args.views, seed=base_seed * 1000 + k, params=params)
        res = multiview_pipeline(scene, cfg1, cfg2, ablation)
        results.append(res)
        per_scene.append(res.report)
    payload = {
        "schema_version": "multiview.v1",
        "ablation": ablation,
        "n_views": args.views,
        "n_scenes": n_scenes,
        "view_recall_at_15": view_recall(results, 15.0),
        "view_recall_at_30": view_recall(results, 30.0),
        "scenes": per_scene,
        "provenance": runio.provenance(
            {"views": args.views, "ablation": ablation, "scenes": meta["provenance"]},
            args.seed,
        ),
    }
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, f"multiview_{ablation}_{args.views}.json")
    runio.write_json(out_path, payload, args.force)
    print(
        f"{ablation} N={args.views}: R@15={payload['view_recall_at_15']:.3f} "
        f"R@30={payload['view_recall_at_30']:.3f} -> {out_path}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    scenes, meta = runio.load_scene_set(args.scenes)
    by_id = {s.scene_id: s for s in scenes.scenes}
    if args.scene_id not in by_id:
        raise RuntimeError(f"scene {args.scene_id} not in {args.scenes}")
    scene = by_id[args.scene_id]
    rng = np.random.default_rng([args.seed, args.scene_id])
    grid = grid_sweep(
        scene.landscape,
        lat_step=args.lat_step,
        lon_step=args.lon_step,
        samples_per_cell=args.samples,
        rng=rng,
    )
    prov = runio.provenance(
        {
            "scene_id": args.scene_id,
            "lat_step": args.lat_step,
            "lon_step": args.lon_step,
            "samples": args.samples,
            "scenes": meta["provenance"],
        },
        args.seed,
    )
    os.makedirs(args.out, exist_ok=True)
    runio.export_grid(grid, args.out, prov, args.force)
    if args.score_field:
        if args.checkpoint:
            net, mode, _c, _s = runio.load_checkpoint(args.checkpoint)
            if mode != "score":
                raise RuntimeError("score-field export needs a score checkpoint")

            def field_at(x):
                return net.forward(scene.descriptor[None, :], x[None, :])[0]

        else:

            def field_at(x):
                from .geometry import RelPose

                return oracle_score(scene.landscape, RelPose.from_array(x), 1.0)

        lat = np.deg2rad(grid.lat_deg)
        lon = np.deg2rad(grid.lon_deg)
        f = np.zeros((len(lat), len(lon), 3))
        for i, la in enumerate(lat):
            for j, lo in enumerate(lon):
                f[i, j] = field_at(np.array([la, lo, scene.landscape.gt.drho]))
        runio.export_score_field(
            grid.lat_deg, grid.lon_deg, f[..., 0], f[..., 1], f[..., 2],
            args.out, prov, args.force,
        )
    print(f"wrote grid ({grid.metadata['n_lat']}x{grid.metadata['n_lon']}) to {args.out}")
    return EXIT_OK


def _verify_rows(check: str, seed: int):
    rows = []
    if check in ("decay", "all"):
        rep = verify_decay(alpha=0.1, iters=50, seed=seed)
        rows.append(
            (
                "decay slope",
                f"{rep.slope_measured:.10f}",
                f"{rep.slope_expected:.10f}",
                rep.passed,
            )
        )
        rows.append(
            ("decay final ratio", f"{rep.final_ratio:.6e}", f"{rep.expected_ratio:.6e}",
             abs(rep.final_ratio / rep.expected_ratio - 1) < 1e-8)
        )
    if check in ("variance", "all"):
        rep = verify_decay(
            alpha=0.1, iters=500, n_chains=10_000, gamma=(0.0, 0.3, 0.0),
            seed=seed, burn_in=200,
        )
        ok = rep.passed and 0.405 <= rep.var_measured[1] <= 0.495
        rows.append(
            ("stationary var (dphi)", f"{rep.var_measured[1]:.4f}", "0.45 +/- 10%", ok)
        )
    if check in ("lemma2", "all"):
        dirac = DiscreteConditional.dirac([0.2, 1.0, 1.6])
        mixture = DiscreteConditional(
            np.array([[-1.0, 0.0, 0.0], [1.0, 0.0, 0.0]]), np.array([0.5, 0.5])
        )
        rep = verify_lemma2(default_grid(50), dirac, mixture, tol=1e-12)
        rows.append(("lemma2 dirac max diff", f"{rep.dirac_max_diff:.2e}", "< 1e-12", rep.dirac_max_diff < 1e-12))
        xt = np.array([0.5, 0.0, 0.0])
        diff = abs(
            optimal_score_posterior(mixture, xt)[0] - optimal_score_prior(mixture, xt)[0]
        )
        rows.append(
            ("lemma2 mixture diff @0.5", f"{diff:.4f}", "0.4622 +/- 1e-3",
             abs(diff - 0.4622) < 1e-3)
        )
    if check in ("gradients", "all"):
        rep = gradient_checks(seed=seed, n_configs=20)
        rows.append(
            ("landscape grad rel err", f"{rep.landscape_max_rel_err:.2e}", "< 1e-4",
             rep.landscape_max_rel_err < 1e-4)
        )
        rows.append(
            ("score param grad rel err", f"{rep.score_param_max_rel_err:.2e}", "< 1e-4",
             rep.score_param_max_rel_err < 1e-4)
        )
        rows.append(
            ("energy input grad rel err", f"{rep.energy_input_max_rel_err:.2e}", "< 1e-4",
             rep.energy_input_max_rel_err < 1e-4)
        )
    return rows


def cmd_verify(args) -> int:
    rows = _verify_rows(args.check, args.seed)
    width = max(len(r[0]) for r in rows)
    ok = True
    for name, measured, expected, passed in rows:
        ok &= bool(passed)
        status = "PASS" if passed else "FAIL"
        print(f"{name.ljust(width)}  measured={measured}  expected={expected}  {status}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_bench(args) -> int:
    cfg = runio.load_config(args.config)
    gen = cfg.generator
    scenes = make_scene_set(cfg.n_scenes, cfg.descriptor_dim, gen, cfg.seed)
    if cfg.score_source == "train":
        rng = np.random.default_rng(cfg.train.seed)
        net = make_score_network(cfg.descriptor_dim, rng)
        train(net, scenes, cfg.train, mode="score")
        score_for = lambda scene: net
    else:
        score_for = lambda scene: scene.landscape
    rows = []
    timings = []
    for n_inits in cfg.bench_trial_counts:
        for method in ("two_stage", "stage2_only"):
            cfg1 = (
                cfg.stage1
                if method == "two_stage"
                else Stage1Config(
                    alpha=cfg.stage1.alpha,
                    gamma=cfg.stage1.gamma,
                    iters=0,
                    seed=cfg.stage1.seed,
                    domain=cfg.stage1.domain,
                )
            )
            trials = {}
            gts = {}
            t0 = time.perf_counter()
            for scene in scenes.scenes:
                inits = random_inits(
                    n_inits, np.random.default_rng([cfg.seed, scene.scene_id, n_inits])
                )
                results, _ = multi_start(scene, score_for(scene), inits, cfg1, cfg.stage2)
                trials[scene.scene_id] = results
                gts[scene.scene_id] = scene.landscape.gt
            elapsed = time.perf_counter() - t0
            report = evaluate(trials, gts, cfg.thresholds)
            rows.append(
                [
                    method,
                    n_inits,
                    repr(report.recall[30.0]),
                    repr(report.recall_rot[30.0]),
                    repr(report.median_rot_deg),
                ]
            )
            timings.append(f"{method} n_inits={n_inits}: {elapsed:.2f}s total\n")
    os.makedirs(args.out, exist_ok=True)
    prov = runio.provenance(cfg.to_dict(), cfg.seed)
    runio.write_csv(
        os.path.join(args.out, "bench.csv"),
        ["method", "n_inits", "recall_at_30", "recall_rot_at_30", "median_rot_deg"],
        rows,
        args.force,
    )
    runio.write_json(
        os.path.join(args.out, "bench.json"),
        {
            "schema_version": "bench.v1",
            "rows": [
                {
                    "method": r[0],
                    "n_inits": r[1],
                    "recall_at_30": float(r[2]),
                    "recall_rot_at_30": float(r[3]),
                    "median_rot_deg": float(r[4]),
                }
                for r in rows
            ],
            "provenance": prov,
        },
        args.force,
    )
    # wall-clock timings are inherently non-reproducible; kept out of CSV/JSON
    with open(os.path.join(args.out, "timings.txt"), "w") as f:
        f.writelines(timings)
    for r in rows:
        print(f"{r[0]:>12} n_inits={r[1]}: R@30={float(r[2]):.3f}")
    return EXIT_OK


COMMANDS = {
    "gen-scenes": cmd_gen_scenes,
    "train": cmd_train,
    "estimate": cmd_estimate,
    "multiview": cmd_multiview,
    "sweep": cmd_sweep,
    "verify": cmd_verify,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (OutputExistsError, FileNotFoundError, RuntimeError, ValueError) as e:
        print(f"scorepose: error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    raise SystemExit(main())
