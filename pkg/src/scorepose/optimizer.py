"""Two-stage pose optimization: score-guided Langevin updates, then Adam on the
energy with a reduce-on-plateau learning-rate schedule, plus multi-start
orchestration with per-trial RNG isolation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adam import AdamState, adam_step
from .geometry import RelPose, rel_as_pose, rotation_error, translation_error, wrap_angle
from .landscape import DomainBox, LandscapeSpec, Scene, energy, energy_grad, oracle_score
from .scorenet import PoseConditionedNet


@dataclass(frozen=True)
class Stage1Config:
    """Langevin stage: x' = x + alpha * score + G z, G = diag(gamma)."""

    alpha: float = 0.1
    gamma: tuple[float, float, float] = (0.0, 0.3, 0.0)
    iters: int = 50
    seed: int = 0
    sigma: float = 1.0
    domain: DomainBox = field(default_factory=DomainBox)

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if any(g < 0 for g in self.gamma):
            raise ValueError("noise scales must be nonnegative")
        if self.iters < 0:
            raise ValueError("iters must be >= 0")


@dataclass(frozen=True)
class Stage2Config:
    """Energy refinement: Adam with reduce-on-plateau learning-rate decay."""

    lr: float = 0.1
    iters: int = 50
    decay_factor: float = 0.7
    patience: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    stochastic_energy: bool = False
    samples_per_eval: int = 1
    domain: DomainBox = field(default_factory=DomainBox)

    def __post_init__(self):
        if not 0.0 < self.decay_factor < 1.0:
            raise ValueError("decay_factor must lie in (0, 1)")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr <= 0 or self.iters < 0 or self.samples_per_eval < 1:
            raise ValueError("invalid stage-2 configuration")


@dataclass
class TrajectoryPoint:
    stage: str
    iteration: int
    pose: RelPose
    energy: float | None = None
    score: np.ndarray | None = None


class Trajectory:
    """Ordered iterate record; stage-1 entries precede stage-2 entries."""

    def __init__(self, points: list[TrajectoryPoint] | None = None):
        self.points = points or []

    def append(self, point: TrajectoryPoint) -> None:
        self.points.append(point)

    def extend(self, other: "Trajectory") -> None:
        self.points.extend(other.points)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]

    @property
    def final_pose(self) -> RelPose:
        return self.points[-1].pose


@dataclass
class TrialResult:
    init_pose: RelPose
    final_pose: RelPose
    final_energy: float
    trajectory: Trajectory
    converged: bool | None = None


class NonFiniteEnergyError(RuntimeError):
    """Stage-2 energy became non-finite; the trial is aborted."""


def _as_score_fn(score_model, descriptor, sigma: float):
    if isinstance(score_model, LandscapeSpec):
        return lambda x: oracle_score(score_model, x, sigma)
    if isinstance(score_model, PoseConditionedNet):
        if score_model.cfg.out_dim != 3:
            raise ValueError("score model must have 3 outputs")
        if descriptor is None:
            raise ValueError("a network score model needs a descriptor")
        d = np.asarray(descriptor, dtype=float)
        return lambda x: score_model.forward(d[None, :], x.as_array()[None, :])[0]
    if callable(score_model):
        return score_model
    raise TypeError(f"unsupported score model {type(score_model)}")


def _as_energy_fns(energy_model, descriptor):
    """(deterministic energy fn, gradient fn) over RelPose."""
    if isinstance(energy_model, LandscapeSpec):
        return (
            lambda x: energy(energy_model, x),
            lambda x: energy_grad(energy_model, x),
        )
    if isinstance(energy_model, PoseConditionedNet):
        if energy_model.cfg.out_dim != 1:
            raise ValueError("energy model must have a scalar output")
        if descriptor is None:
            raise ValueError("a network energy model needs a descriptor")
        d = np.asarray(descriptor, dtype=float)
        return (
            lambda x: float(energy_model.forward(d[None, :], x.as_array()[None, :])[0, 0]),
            lambda x: energy_model.input_grad(d, x.as_array())[0],
        )
    raise TypeError(f"unsupported energy model {type(energy_model)}")


def langevin_step(
    x: RelPose,
    score: np.ndarray,
    cfg: Stage1Config,
    rng: np.random.Generator | None = None,
) -> RelPose:
    """One Langevin update; dphi re-wrapped, dtheta/drho clamped to the domain."""
    score = np.asarray(score, dtype=float)
    if not np.isfinite(score).all():
        raise ValueError("score must be finite")
    new = x.as_array() + cfg.alpha * score
    g = np.asarray(cfg.gamma, dtype=float)
    if g.any():
        if rng is None:
            raise ValueError("noisy stage-1 updates require an rng")
        new = new + g * rng.standard_normal(3)
    return RelPose.from_array(cfg.domain.clamp(new))


def run_stage1(
    score_model,
    descriptor,
    init: RelPose,
    cfg: Stage1Config,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Score-guided Langevin stage; records every iterate with its score."""
    score_fn = _as_score_fn(score_model, descriptor, cfg.sigma)
    if rng is None and any(cfg.gamma):
        rng = np.random.default_rng(cfg.seed)
    traj = Trajectory()
    x = init
    s = score_fn(x)
    traj.append(TrajectoryPoint("stage1", 0, x, score=np.asarray(s, float)))
    for t in range(1, cfg.iters + 1):
        x = langevin_step(x, s, cfg, rng)
        s = score_fn(x)
        traj.append(TrajectoryPoint("stage1", t, x, score=np.asarray(s, float)))
    return traj


def run_stage2(
    energy_model,
    descriptor,
    init: RelPose,
    cfg: Stage2Config,
    rng: np.random.Generator | None = None,
) -> Trajectory:
    """Adam descent on the energy. The recorded energy is stochastic when
    requested; the returned final iterate is the best energy seen, so the
    final deterministic energy never exceeds the initial one."""
    efn, gfn = _as_energy_fns(energy_model, descriptor)
    stochastic = cfg.stochastic_energy and isinstance(energy_model, LandscapeSpec)
    if stochastic and energy_model.noise_std > 0 and rng is None:
        raise ValueError("stochastic stage-2 evaluation requires an rng")

    def observe(x: RelPose) -> float:
        if stochastic and energy_model.noise_std > 0:
            vals = [
                energy(energy_model, x, stochastic=True, rng=rng)
                for _ in range(cfg.samples_per_eval)
            ]
            return float(np.mean(vals))
        return efn(x)

    traj = Trajectory()
    x = init
    e_obs = observe(x)
    traj.append(TrajectoryPoint("stage2", 0, x, energy=e_obs))
    best_pose, best_det = x, efn(x)
    lr = cfg.lr
    sched_best = e_obs
    bad = 0
    state = AdamState.zeros(3)
    arr = x.as_array()
    for t in range(1, cfg.iters + 1):
        g = gfn(x)
        if not np.isfinite(g).all():
            raise NonFiniteEnergyError(f"non-finite gradient at iteration {t}: {g}")
        adam_step(arr, np.asarray(g, float), state, lr, cfg.beta1, cfg.beta2)
        arr = cfg.domain.clamp(arr)
        x = RelPose.from_array(arr)
        e_obs = observe(x)
        if not math.isfinite(e_obs):
            raise NonFiniteEnergyError(f"non-finite energy at iteration {t}")
        traj.append(TrajectoryPoint("stage2", t, x, energy=e_obs))
        det = efn(x)
        if det < best_det:
            best_det, best_pose = det, x
        if e_obs < sched_best:
            sched_best = e_obs
            bad = 0
        else:
            bad += 1
            if bad > cfg.patience:
                lr *= cfg.decay_factor
                bad = 0
    if traj.final_pose is not best_pose:
        traj.append(
            TrajectoryPoint("stage2", cfg.iters + 1, best_pose, energy=best_det)
        )
    return traj


def run_two_stage(
    score_model,
    energy_model,
    descriptor,
    init: RelPose,
    cfg1: Stage1Config,
    cfg2: Stage2Config,
    rng: np.random.Generator | None = None,
    gt: RelPose | None = None,
    rot_thresh_deg: float = 30.0,
    trans_thresh: float = 0.2,
) -> TrialResult:
    """Stage 1 then stage 2; with iters=0 the first stage is skipped entirely."""
    traj = Trajectory()
    x = init
    if cfg1.iters > 0:
        t1 = run_stage1(score_model, descriptor, init, cfg1, rng)
        traj.extend(t1)
        x = t1.final_pose
    t2 = run_stage2(energy_model, descriptor, x, cfg2, rng)
    traj.extend(t2)
    final = traj.final_pose
    efn, _ = _as_energy_fns(energy_model, descriptor)
    final_energy = efn(final)
    converged = None
    if gt is not None:
        rot = math.degrees(rotation_error(rel_as_pose(final), rel_as_pose(gt)))
        trans = translation_error(rel_as_pose(final), rel_as_pose(gt))
        converged = bool(rot < rot_thresh_deg and trans < trans_thresh)
    return TrialResult(init, final, final_energy, traj, converged)


def multi_start(
    scene: Scene,
    score_model,
    inits: list[RelPose],
    cfg1: Stage1Config,
    cfg2: Stage2Config,
    energy_model=None,
) -> tuple[list[TrialResult], int]:
    """Independent trials from each init; best = lowest final energy, ties
    broken by the lowest trial index. Per-trial RNG streams are derived from
    (cfg1.seed, trial_index), so results do not depend on execution order."""
    if not inits:
        raise ValueError("need at least one init")
    energy_model = energy_model if energy_model is not None else scene.landscape
    results = []
    for i, init in enumerate(inits):
        rng = np.random.default_rng([cfg1.seed, i])
        results.append(
            run_two_stage(
                score_model,
                energy_model,
                scene.descriptor,
                init,
                cfg1,
                cfg2,
                rng=rng,
                gt=scene.landscape.gt,
            )
        )
    best = 0
    for i, r in enumerate(results):
        if r.final_energy < results[best].final_energy:
            best = i
    return results, best


def canonical_inits(drho: float = 1.6) -> list[RelPose]:
    """Nine uniformly spread starts: latitudes -30/0/30 deg x longitudes 0/120/240."""
    lats = (-30.0, 0.0, 30.0)
    lons = (0.0, 120.0, 240.0)
    return [
        RelPose(math.radians(lat), math.radians(lon), drho)
        for lat in lats
        for lon in lons
    ]


def random_inits(
    n: int, rng: np.random.Generator, domain: DomainBox | None = None
) -> list[RelPose]:
    box = domain or DomainBox()
    return [RelPose.from_array(row) for row in box.sample(rng, n)]
