"""Experiment configuration, persistence, and result serialization.

All artifacts are JSON or CSV, embed (config hash, seed, code version) for
provenance, never carry timestamps, and are therefore byte-identical across
repeated runs with the same seed. No output path is overwritten unless the
caller passes force=True.
"""

from __future__ import annotations

import base64
import csv
import hashlib
import io
import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .geometry import RelPose
from .landscape import (
    DomainBox,
    GeneratorParams,
    LandscapeGrid,
    LandscapeSpec,
    Scene,
    SceneSet,
)
from .metrics import MetricsReport, Thresholds, format_table
from .optimizer import Stage1Config, Stage2Config, TrialResult
from .scorenet import NetConfig, PoseConditionedNet, TrainConfig, TrainState
from .adam import AdamState

SCENES_SCHEMA = "scenes.v1"
CHECKPOINT_SCHEMA = "checkpoint.v1"
GRID_SCHEMA = "grid.v1"
TRAJ_SCHEMA = "trajectories.v1"
FIELD_SCHEMA = "scorefield.v1"


class OutputExistsError(RuntimeError):
    """Refusing to overwrite an existing output without force=True."""


class SchemaVersionError(RuntimeError):
    """File schema version does not match this code."""


class IntegrityError(RuntimeError):
    """Embedded content hash does not match the payload."""


class CorruptFileError(RuntimeError):
    """File exists but cannot be parsed."""


def ensure_writable(path: str, force: bool) -> None:
    if os.path.exists(path) and not force:
        raise OutputExistsError(f"{path} exists; pass force to overwrite")


def write_json(path: str, obj, force: bool = False) -> None:
    ensure_writable(path, force)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as f:
        json.dump(obj, f, indent=2)
        f.write("\n")


def read_json(path: str) -> dict:
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise CorruptFileError(f"{path}: {e}") from e


def write_csv(path: str, header: list[str], rows, force: bool = False) -> None:
    ensure_writable(path, force)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode()


def _unb64(s: str, shape=None) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(s), dtype="<f8").copy()
    return arr.reshape(shape) if shape is not None else arr


def config_hash(obj) -> str:
    return hashlib.sha256(
        json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()
    ).hexdigest()[:16]


def provenance(cfg_dict, seed: int) -> dict:
    return {
        "config_hash": config_hash(cfg_dict),
        "seed": seed,
        "code_version": __version__,
    }


# ---------------------------------------------------------------------------
# dataclass <-> dict converters


def domain_to_dict(d: DomainBox) -> dict:
    return asdict(d)


def domain_from_dict(d: dict) -> DomainBox:
    return DomainBox(**d)


def spec_to_dict(s: LandscapeSpec) -> dict:
    return {
        "gt": list(s.gt.as_array()),
        "well_depth": s.well_depth,
        "well_width": list(s.well_width),
        "symmetry_mode": s.symmetry_mode,
        "depth_ratio": s.depth_ratio,
        "roughness_amp": s.roughness_amp,
        "roughness_freq": s.roughness_freq,
        "noise_std": s.noise_std,
        "seed": s.seed,
        "domain": domain_to_dict(s.domain),
    }


def spec_from_dict(d: dict) -> LandscapeSpec:
    return LandscapeSpec(
        gt=RelPose.from_array(d["gt"]),
        well_depth=d["well_depth"],
        well_width=tuple(d["well_width"]),
        symmetry_mode=d["symmetry_mode"],
        depth_ratio=d["depth_ratio"],
        roughness_amp=d["roughness_amp"],
        roughness_freq=d["roughness_freq"],
        noise_std=d["noise_std"],
        seed=d["seed"],
        domain=domain_from_dict(d["domain"]),
    )


def generator_to_dict(g: GeneratorParams) -> dict:
    d = asdict(g)
    d["domain"] = domain_to_dict(g.domain)
    return d


def generator_from_dict(d: dict) -> GeneratorParams:
    d = dict(d)
    d["domain"] = domain_from_dict(d["domain"])
    for key in (
        "well_depth_range",
        "theta_width_range",
        "phi_width_range",
        "rho_width_range",
    ):
        d[key] = tuple(d[key])
    return GeneratorParams(**d)


def train_cfg_to_dict(c: TrainConfig) -> dict:
    d = asdict(c)
    d["domain"] = domain_to_dict(c.domain)
    return d


def train_cfg_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["domain"] = domain_from_dict(d["domain"])
    return TrainConfig(**d)


def stage1_to_dict(c: Stage1Config) -> dict:
    d = asdict(c)
    d["domain"] = domain_to_dict(c.domain)
    return d


def stage1_from_dict(d: dict) -> Stage1Config:
    d = dict(d)
    d["domain"] = domain_from_dict(d["domain"])
    d["gamma"] = tuple(d["gamma"])
    return Stage1Config(**d)


def stage2_to_dict(c: Stage2Config) -> dict:
    d = asdict(c)
    d["domain"] = domain_to_dict(c.domain)
    return d


def stage2_from_dict(d: dict) -> Stage2Config:
    d = dict(d)
    d["domain"] = domain_from_dict(d["domain"])
    return Stage2Config(**d)


def thresholds_to_dict(t: Thresholds) -> dict:
    return {"rot_deg": list(t.rot_deg), "trans": t.trans}


def thresholds_from_dict(d: dict) -> Thresholds:
    return Thresholds(rot_deg=tuple(d["rot_deg"]), trans=d["trans"])


# ---------------------------------------------------------------------------
# experiment configuration


@dataclass
class ExperimentConfig:
    """Reified experimental setup: scene synthesis, training, both stages,
    initialization strategy, thresholds, and one mandatory master seed."""

    seed: int
    n_scenes: int = 30
    descriptor_dim: int = 32
    generator: GeneratorParams = field(default_factory=GeneratorParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    stage1: Stage1Config = field(default_factory=Stage1Config)
    stage2: Stage2Config = field(default_factory=Stage2Config)
    init_strategy: str = "canonical9"
    thresholds: Thresholds = field(default_factory=Thresholds)
    score_source: str = "train"  # or "oracle"
    bench_trial_counts: tuple[int, ...] = (1, 2, 4, 8)

    def __post_init__(self):
        if self.seed is None:
            raise ValueError("seed is mandatory")
        if self.score_source not in ("train", "oracle"):
            raise ValueError("score_source must be 'train' or 'oracle'")
        parse_init_strategy(self.init_strategy)  # validates

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "n_scenes": self.n_scenes,
            "descriptor_dim": self.descriptor_dim,
            "generator": generator_to_dict(self.generator),
            "train": train_cfg_to_dict(self.train),
            "stage1": stage1_to_dict(self.stage1),
            "stage2": stage2_to_dict(self.stage2),
            "init_strategy": self.init_strategy,
            "thresholds": thresholds_to_dict(self.thresholds),
            "score_source": self.score_source,
            "bench_trial_counts": list(self.bench_trial_counts),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(
            seed=d["seed"],
            n_scenes=d["n_scenes"],
            descriptor_dim=d["descriptor_dim"],
            generator=generator_from_dict(d["generator"]),
            train=train_cfg_from_dict(d["train"]),
            stage1=stage1_from_dict(d["stage1"]),
            stage2=stage2_from_dict(d["stage2"]),
            init_strategy=d["init_strategy"],
            thresholds=thresholds_from_dict(d["thresholds"]),
            score_source=d.get("score_source", "train"),
            bench_trial_counts=tuple(d.get("bench_trial_counts", (1, 2, 4, 8))),
        )


def parse_init_strategy(s: str) -> tuple[str, int]:
    """'canonical9' or 'random:N' -> (kind, count)."""
    if s == "canonical9":
        return "canonical9", 9
    if s.startswith("random:"):
        n = int(s.split(":", 1)[1])
        if n < 1:
            raise ValueError("random:N needs N >= 1")
        return "random", n
    raise ValueError(f"unknown init strategy {s!r}")


def save_config(cfg: ExperimentConfig, path: str, force: bool = False) -> None:
    write_json(path, cfg.to_dict(), force)


def load_config(path: str) -> ExperimentConfig:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    return ExperimentConfig.from_dict(read_json(path))


# ---------------------------------------------------------------------------
# scene sets


def save_scene_set(
    scenes: SceneSet,
    path: str,
    seed: int,
    generator: GeneratorParams | None = None,
    force: bool = False,
) -> None:
    gen_dict = generator_to_dict(generator) if generator else None
    payload = {
        "schema_version": SCENES_SCHEMA,
        "descriptor_dim": scenes.descriptor_dim,
        "n_scenes": len(scenes),
        "generator": gen_dict,
        "scenes": [
            {
                "scene_id": s.scene_id,
                "descriptor": _b64(s.descriptor),
                "landscape": spec_to_dict(s.landscape),
            }
            for s in scenes.scenes
        ],
    }
    payload["provenance"] = provenance(
        {"generator": gen_dict, "n": len(scenes), "dim": scenes.descriptor_dim}, seed
    )
    write_json(path, payload, force)


def load_scene_set(path: str) -> tuple[SceneSet, dict]:
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    d = read_json(path)
    if d.get("schema_version") != SCENES_SCHEMA:
        raise SchemaVersionError(
            f"{path}: expected {SCENES_SCHEMA}, got {d.get('schema_version')}"
        )
    scenes = [
        Scene(
            scene_id=s["scene_id"],
            descriptor=_unb64(s["descriptor"]),
            landscape=spec_from_dict(s["landscape"]),
        )
        for s in d["scenes"]
    ]
    return SceneSet(scenes=scenes, descriptor_dim=d["descriptor_dim"]), d


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(
    path: str,
    net: PoseConditionedNet,
    mode: str,
    train_cfg: TrainConfig,
    state: TrainState,
    force: bool = False,
) -> None:
    payload = {
        "schema_version": CHECKPOINT_SCHEMA,
        "mode": mode,
        "net": asdict(net.cfg),
        "train": train_cfg_to_dict(train_cfg),
        "params": _b64(net.params),
        "param_sha256": hashlib.sha256(
            np.ascontiguousarray(net.params, dtype="<f8").tobytes()
        ).hexdigest(),
        "adam_m": _b64(state.adam.m),
        "adam_v": _b64(state.adam.v),
        "adam_t": state.adam.t,
        "rng_state": state.rng_state,
        "epochs_done": state.epochs_done,
        "loss_curve": state.loss_curve,
    }
    payload["provenance"] = provenance(
        {"net": payload["net"], "train": payload["train"], "mode": mode},
        train_cfg.seed,
    )
    write_json(path, payload, force)


def load_checkpoint(path: str):
    """-> (net, mode, train_cfg, TrainState); verifies schema and payload hash."""
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    d = read_json(path)
    if d.get("schema_version") != CHECKPOINT_SCHEMA:
        raise SchemaVersionError(
            f"{path}: expected {CHECKPOINT_SCHEMA}, got {d.get('schema_version')}"
        )
    params = _unb64(d["params"])
    digest = hashlib.sha256(
        np.ascontiguousarray(params, dtype="<f8").tobytes()
    ).hexdigest()
    if digest != d["param_sha256"]:
        raise IntegrityError(f"{path}: parameter hash mismatch")
    net = PoseConditionedNet(NetConfig(**d["net"]), params)
    state = TrainState(
        adam=AdamState(m=_unb64(d["adam_m"]), v=_unb64(d["adam_v"]), t=d["adam_t"]),
        rng_state=d["rng_state"],
        epochs_done=d["epochs_done"],
        loss_curve=list(d["loss_curve"]),
    )
    return net, d["mode"], train_cfg_from_dict(d["train"]), state


# ---------------------------------------------------------------------------
# exports consumed by the viz component


def export_grid(grid: LandscapeGrid, out_dir: str, prov: dict, force: bool = False):
    csv_path = os.path.join(out_dir, "grid.csv")
    json_path = os.path.join(out_dir, "grid.json")
    rows = []
    for i, lat in enumerate(grid.lat_deg):
        for j, lon in enumerate(grid.lon_deg):
            rows.append([repr(float(lat)), repr(float(lon)), repr(float(grid.values[i, j]))])
    write_csv(csv_path, ["lat_deg", "lon_deg", "normalized_energy"], rows, force)
    meta = dict(grid.metadata)
    meta["provenance"] = prov
    write_json(json_path, meta, force)
    return csv_path, json_path


def export_score_field(
    lat_deg: np.ndarray,
    lon_deg: np.ndarray,
    field_dtheta: np.ndarray,
    field_dphi: np.ndarray,
    field_drho: np.ndarray,
    out_dir: str,
    prov: dict,
    force: bool = False,
):
    csv_path = os.path.join(out_dir, "score_field.csv")
    json_path = os.path.join(out_dir, "score_field.json")
    rows = []
    for i, lat in enumerate(lat_deg):
        for j, lon in enumerate(lon_deg):
            rows.append(
                [
                    repr(float(lat)),
                    repr(float(lon)),
                    repr(float(field_dtheta[i, j])),
                    repr(float(field_dphi[i, j])),
                    repr(float(field_drho[i, j])),
                ]
            )
    write_csv(
        csv_path,
        ["lat_deg", "lon_deg", "s_dtheta", "s_dphi", "s_drho"],
        rows,
        force,
    )
    write_json(
        json_path,
        {
            "schema_version": FIELD_SCHEMA,
            "n_lat": len(lat_deg),
            "n_lon": len(lon_deg),
            "provenance": prov,
        },
        force,
    )
    return csv_path, json_path


def export_trajectories(
    trials: dict[int, list[TrialResult]],
    out_dir: str,
    prov: dict,
    force: bool = False,
):
    """CSV rows (scene, trial, stage, iter, dtheta, dphi, drho, energy)."""
    csv_path = os.path.join(out_dir, "trajectories.csv")
    json_path = os.path.join(out_dir, "trajectories.json")
    rows = []
    finals = {}
    for scene_id in sorted(trials):
        for k, trial in enumerate(trials[scene_id]):
            for p in trial.trajectory:
                rows.append(
                    [
                        scene_id,
                        k,
                        p.stage,
                        p.iteration,
                        repr(p.pose.dtheta),
                        repr(p.pose.dphi),
                        repr(p.pose.drho),
                        "" if p.energy is None else repr(float(p.energy)),
                    ]
                )
            finals.setdefault(str(scene_id), {})[str(k)] = {
                "final_pose": list(trial.final_pose.as_array()),
                "final_energy": trial.final_energy,
                "converged": trial.converged,
            }
    write_csv(
        csv_path,
        ["scene", "trial", "stage", "iter", "dtheta", "dphi", "drho", "energy"],
        rows,
        force,
    )
    write_json(
        json_path,
        {"schema_version": TRAJ_SCHEMA, "finals": finals, "provenance": prov},
        force,
    )
    return csv_path, json_path


def export_metrics(
    report: MetricsReport, out_dir: str, prov: dict, label: str = "ours", force=False
):
    csv_path = os.path.join(out_dir, "metrics.csv")
    json_path = os.path.join(out_dir, "metrics.json")
    txt_path = os.path.join(out_dir, "metrics.txt")
    ks = report.thresholds.rot_deg
    header = (
        ["method"]
        + [c for k in ks for c in (f"R@{int(k)}", f"RR@{int(k)}")]
        + [c for k in ks for c in (f"SR@{int(k)}", f"SRR@{int(k)}")]
        + ["median_rot_deg", "median_trans"]
    )
    row = (
        [label]
        + [repr(v) for k in ks for v in (report.recall[k], report.recall_rot[k])]
        + [repr(v) for k in ks for v in (report.success[k], report.success_rot[k])]
        + [repr(report.median_rot_deg), repr(report.median_trans)]
    )
    write_csv(csv_path, header, [row], force)
    payload = {
        "recall": {str(k): v for k, v in report.recall.items()},
        "recall_rot": {str(k): v for k, v in report.recall_rot.items()},
        "success": {str(k): v for k, v in report.success.items()},
        "success_rot": {str(k): v for k, v in report.success_rot.items()},
        "median_rot_deg": report.median_rot_deg,
        "median_trans": report.median_trans,
        "n_scenes": report.n_scenes,
        "n_trials_per_scene": report.n_trials_per_scene,
        "thresholds": thresholds_to_dict(report.thresholds),
        "provenance": prov,
    }
    write_json(json_path, payload, force)
    ensure_writable(txt_path, force)
    with open(txt_path, "w") as f:
        f.write(format_table(report, label))
    return csv_path, json_path, txt_path
