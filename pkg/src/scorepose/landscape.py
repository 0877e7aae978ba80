"""Synthetic differentiable energy landscapes over pose deltas.

The landscape family reproduces the pathologies seen in diffusion-MSE pose
objectives: a single anisotropic well, a pair of wells 180 degrees apart in
longitude (front/back symmetry), and a longitudinal plateau (continuous
symmetry), with optional smooth roughness and additive evaluation noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import RelPose, wrap_angle, wrap_angles

BASELINE = 1.0

# Weight of the quadratic penalty applied outside the domain box.
CLAMP_PENALTY = 10.0

SYMMETRY_MODES = ("none", "bimodal", "plateau")


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned sampling box for pose deltas; longitude is periodic."""

    theta_min: float = -math.pi / 3
    theta_max: float = math.pi / 3
    rho_min: float = 1.2
    rho_max: float = 2.0

    def clamp(self, x) -> np.ndarray:
        a = np.array(x, dtype=float)
        a[..., 0] = np.clip(a[..., 0], self.theta_min, self.theta_max)
        a[..., 1] = wrap_angles(a[..., 1])
        a[..., 2] = np.clip(a[..., 2], self.rho_min, self.rho_max)
        return a

    def contains(self, x) -> bool:
        a = np.asarray(x, dtype=float)
        return bool(
            (self.theta_min <= a[0] <= self.theta_max)
            and (self.rho_min <= a[2] <= self.rho_max)
        )

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        out = np.empty((n, 3))
        out[:, 0] = rng.uniform(self.theta_min, self.theta_max, n)
        out[:, 1] = wrap_angles(rng.uniform(0.0, 2.0 * math.pi, n))
        out[:, 2] = rng.uniform(self.rho_min, self.rho_max, n)
        return out

    def center(self) -> RelPose:
        return RelPose(
            0.5 * (self.theta_min + self.theta_max),
            0.0,
            0.5 * (self.rho_min + self.rho_max),
        )


@dataclass(frozen=True)
class LandscapeSpec:
    """Parametric energy oracle with analytic gradient.

    Deterministic energy:
        E(x) = BASELINE - A * K(x, gt) [- kappa * A * K(x, gt + (0, pi, 0))]
               + roughness(x) + clamp penalty,
    where K is an anisotropic Gaussian kernel whose longitude term uses the
    shorter-arc distance; in plateau mode K and the roughness drop the
    longitude coordinate entirely.
    """

    gt: RelPose
    well_depth: float = 1.0
    well_width: tuple[float, float, float] = (0.45, 0.6, 0.3)
    symmetry_mode: str = "none"
    depth_ratio: float = 0.9
    roughness_amp: float = 0.0
    roughness_freq: int = 3
    noise_std: float = 0.0
    seed: int = 0
    domain: DomainBox = field(default_factory=DomainBox)

    def __post_init__(self):
        if self.symmetry_mode not in SYMMETRY_MODES:
            raise ValueError(f"unknown symmetry_mode {self.symmetry_mode!r}")
        if self.well_depth <= 0:
            raise ValueError("well_depth must be positive")
        if any(s <= 0 for s in self.well_width):
            raise ValueError("well widths must be positive")
        if not 0.0 <= self.depth_ratio <= 1.0:
            raise ValueError("depth_ratio must lie in [0, 1]")
        if self.roughness_amp < 0 or self.noise_std < 0:
            raise ValueError("roughness_amp and noise_std must be >= 0")
        if int(self.roughness_freq) != self.roughness_freq:
            raise ValueError("roughness_freq must be an integer")

    def false_mode(self) -> RelPose:
        """Center of the secondary well (bimodal mode only)."""
        return RelPose(self.gt.dtheta, self.gt.dphi + math.pi, self.gt.drho)


def _well_terms(spec: LandscapeSpec):
    """(center array, depth) pairs for every well in the spec."""
    wells = [(spec.gt.as_array(), spec.well_depth)]
    if spec.symmetry_mode == "bimodal":
        wells.append((spec.false_mode().as_array(), spec.depth_ratio * spec.well_depth))
    return wells


def _energy_components(spec: LandscapeSpec, dt, dp, dr):
    """Deterministic energy on clamped in-domain coordinate arrays."""
    st, sp, sr = spec.well_width
    plateau = spec.symmetry_mode == "plateau"
    e = np.full(np.broadcast(dt, dp, dr).shape, BASELINE, dtype=float)
    for center, depth in _well_terms(spec):
        q = ((dt - center[0]) / st) ** 2 + ((dr - center[2]) / sr) ** 2
        if not plateau:
            q = q + (wrap_angles(dp - center[1]) / sp) ** 2
        e = e - depth * np.exp(-0.5 * q)
    if spec.roughness_amp > 0:
        f = float(spec.roughness_freq)
        terms = np.sin(f * dt) + np.sin(f * dr)
        n_terms = 2.0
        if not plateau:
            terms = terms + np.sin(f * dp)
            n_terms = 3.0
        e = e + spec.roughness_amp * terms / n_terms
    return e


def energy_array(spec: LandscapeSpec, x) -> np.ndarray:
    """Deterministic energy for an (..., 3) array of pose deltas."""
    a = np.asarray(x, dtype=float)
    clamped = spec.domain.clamp(a)
    e = _energy_components(spec, clamped[..., 0], clamped[..., 1], clamped[..., 2])
    over = (a[..., 0] - clamped[..., 0]) ** 2 + (a[..., 2] - clamped[..., 2]) ** 2
    return e + CLAMP_PENALTY * over


def energy(
    spec: LandscapeSpec,
    x: RelPose,
    stochastic: bool = False,
    rng: np.random.Generator | None = None,
) -> float:
    """Energy at a pose delta; stochastic mode adds N(0, noise_std^2) from rng."""
    e = float(energy_array(spec, x.as_array()))
    if stochastic and spec.noise_std > 0:
        if rng is None:
            raise ValueError("stochastic evaluation requires an explicit rng")
        e += spec.noise_std * float(rng.standard_normal())
    return e


def energy_grad(spec: LandscapeSpec, x: RelPose) -> np.ndarray:
    """Analytic gradient of the deterministic energy.

    Outside the box the gradient of a clamped coordinate comes from the
    quadratic penalty alone; the shorter-arc longitude distance makes the
    gradient undefined only on the measure-zero seam opposite each well.
    """
    a = x.as_array()
    c = spec.domain.clamp(a)
    dt, dp, dr = c
    st, sp, sr = spec.well_width
    plateau = spec.symmetry_mode == "plateau"
    grad = np.zeros(3)
    for center, depth in _well_terms(spec):
        delta = np.array([dt - center[0], wrap_angle(dp - center[1]), dr - center[2]])
        q = (delta[0] / st) ** 2 + (delta[2] / sr) ** 2
        if not plateau:
            q += (delta[1] / sp) ** 2
        k = math.exp(-0.5 * q)
        grad[0] += depth * k * delta[0] / st**2
        grad[2] += depth * k * delta[2] / sr**2
        if not plateau:
            grad[1] += depth * k * delta[1] / sp**2
    if spec.roughness_amp > 0:
        f = float(spec.roughness_freq)
        n_terms = 2.0 if plateau else 3.0
        scale = spec.roughness_amp * f / n_terms
        grad[0] += scale * math.cos(f * dt)
        grad[2] += scale * math.cos(f * dr)
        if not plateau:
            grad[1] += scale * math.cos(f * dp)
    # Clamped coordinates: only the penalty varies with the raw coordinate.
    for i in (0, 2):
        if a[i] != c[i]:
            grad[i] = 2.0 * CLAMP_PENALTY * (a[i] - c[i])
    return grad


def oracle_score(spec: LandscapeSpec, x: RelPose, sigma: float) -> np.ndarray:
    """Exact Dirac-conditional score (gt - x) / sigma^2 with shorter-arc longitude."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    diff = np.array(
        [
            spec.gt.dtheta - x.dtheta,
            wrap_angle(spec.gt.dphi - x.dphi),
            spec.gt.drho - x.drho,
        ]
    )
    return diff / (sigma * sigma)


@dataclass
class LandscapeGrid:
    """Energy sweep over latitude x longitude, normalized to [0, 1]."""

    lat_deg: np.ndarray
    lon_deg: np.ndarray
    values: np.ndarray
    metadata: dict


def grid_sweep(
    spec: LandscapeSpec,
    lat_range: tuple[float, float] = (-60.0, 60.0),
    lat_step: float = 8.0,
    lon_range: tuple[float, float] = (0.0, 360.0),
    lon_step: float = 12.0,
    samples_per_cell: int = 5,
    rng: np.random.Generator | None = None,
) -> LandscapeGrid:
    """Mean stochastic energy on a lat/lon grid at the spec's ground-truth radius.

    Latitude includes both endpoints; the longitude endpoint is excluded as a
    duplicate of 0 degrees. Defaults give a 16 x 30 grid.
    """
    if samples_per_cell < 1:
        raise ValueError("samples_per_cell must be >= 1")
    n_lat_f = (lat_range[1] - lat_range[0]) / lat_step
    n_lon_f = (lon_range[1] - lon_range[0]) / lon_step
    if abs(n_lat_f - round(n_lat_f)) > 1e-9 or abs(n_lon_f - round(n_lon_f)) > 1e-9:
        raise ValueError("steps must divide the sweep ranges")
    lat_deg = lat_range[0] + lat_step * np.arange(round(n_lat_f) + 1)
    lon_deg = lon_range[0] + lon_step * np.arange(round(n_lon_f))
    lat = np.deg2rad(lat_deg)
    lon = np.deg2rad(lon_deg)
    dt, dp = np.meshgrid(lat, lon, indexing="ij")
    dr = np.full_like(dt, spec.gt.drho)
    raw = energy_array(spec, np.stack([dt, dp, dr], axis=-1))
    if spec.noise_std > 0:
        if rng is None:
            raise ValueError("noisy sweep requires an explicit rng")
        noise = rng.standard_normal((len(lat_deg), len(lon_deg), samples_per_cell))
        raw = raw + spec.noise_std * noise.mean(axis=2)
    vmin, vmax = float(raw.min()), float(raw.max())
    if vmax > vmin:
        values = (raw - vmin) / (vmax - vmin)
    else:
        values = np.zeros_like(raw)
    metadata = {
        "schema_version": "grid.v1",
        "lat_range_deg": list(lat_range),
        "lat_step_deg": lat_step,
        "lon_range_deg": list(lon_range),
        "lon_step_deg": lon_step,
        "lon_endpoint_excluded": True,
        "samples_per_cell": samples_per_cell,
        "noise_std": spec.noise_std,
        "drho": spec.gt.drho,
        "normalization": {"kind": "min-max", "vmin": vmin, "vmax": vmax},
        "n_lat": len(lat_deg),
        "n_lon": len(lon_deg),
    }
    return LandscapeGrid(lat_deg, lon_deg, values, metadata)


@dataclass(frozen=True)
class Scene:
    """One synthetic scene: descriptor vector plus its energy oracle."""

    scene_id: int
    descriptor: np.ndarray
    landscape: LandscapeSpec


@dataclass
class SceneSet:
    """Dataset of (descriptor, ground-truth pose, landscape) triples."""

    scenes: list[Scene]
    descriptor_dim: int

    def __post_init__(self):
        ids = [s.scene_id for s in self.scenes]
        if len(set(ids)) != len(ids):
            raise ValueError("scene_ids must be unique")
        for s in self.scenes:
            if s.descriptor.shape != (self.descriptor_dim,):
                raise ValueError("descriptor length must equal descriptor_dim")

    def __len__(self) -> int:
        return len(self.scenes)

    def descriptors(self) -> np.ndarray:
        return np.stack([s.descriptor for s in self.scenes])

    def gts(self) -> np.ndarray:
        return np.stack([s.landscape.gt.as_array() for s in self.scenes])


@dataclass(frozen=True)
class GeneratorParams:
    """Knobs for synthesizing a scene set."""

    symmetry_mode: str = "none"
    depth_ratio: float = 0.9
    well_depth_range: tuple[float, float] = (0.8, 1.2)
    theta_width_range: tuple[float, float] = (0.35, 0.55)
    phi_width_range: tuple[float, float] = (0.5, 0.8)
    rho_width_range: tuple[float, float] = (0.25, 0.4)
    noise_std: float = 0.0
    roughness_amp: float = 0.0
    roughness_freq: int = 3
    domain: DomainBox = field(default_factory=DomainBox)
    descriptor_noise: float = 0.01


_MODE_INDEX = {m: i for i, m in enumerate(SYMMETRY_MODES)}


def _descriptor_features(spec: LandscapeSpec, params: GeneratorParams) -> np.ndarray:
    box = params.domain
    rho_mid = 0.5 * (box.rho_min + box.rho_max)
    rho_half = 0.5 * (box.rho_max - box.rho_min)
    one_hot = np.zeros(3)
    one_hot[_MODE_INDEX[spec.symmetry_mode]] = 1.0
    return np.concatenate(
        [
            [
                spec.gt.dtheta,
                math.sin(spec.gt.dphi),
                math.cos(spec.gt.dphi),
                (spec.gt.drho - rho_mid) / max(rho_half, 1e-12),
                spec.well_depth,
                spec.depth_ratio,
                *spec.well_width,
                spec.noise_std,
                spec.roughness_amp,
            ],
            one_hot,
        ]
    )


def make_scene_set(
    n_scenes: int,
    descriptor_dim: int = 32,
    params: GeneratorParams | None = None,
    seed: int = 0,
) -> SceneSet:
    """Reproducible scene synthesis; descriptors are a seeded nonlinear
    projection of the ground truth and landscape parameters."""
    if n_scenes < 1:
        raise ValueError("n_scenes must be >= 1")
    params = params or GeneratorParams()
    rng = np.random.default_rng(seed)
    box = params.domain
    gts = box.sample(rng, n_scenes)
    depths = rng.uniform(*params.well_depth_range, n_scenes)
    widths = np.stack(
        [
            rng.uniform(*params.theta_width_range, n_scenes),
            rng.uniform(*params.phi_width_range, n_scenes),
            rng.uniform(*params.rho_width_range, n_scenes),
        ],
        axis=1,
    )
    specs = [
        LandscapeSpec(
            gt=RelPose.from_array(gts[i]),
            well_depth=float(depths[i]),
            well_width=tuple(float(w) for w in widths[i]),
            symmetry_mode=params.symmetry_mode,
            depth_ratio=params.depth_ratio,
            roughness_amp=params.roughness_amp,
            roughness_freq=params.roughness_freq,
            noise_std=params.noise_std,
            seed=int(seed) * 100003 + i,
            domain=box,
        )
        for i in range(n_scenes)
    ]
    feats = np.stack([_descriptor_features(s, params) for s in specs])
    proj = rng.normal(0.0, 1.0, (descriptor_dim, feats.shape[1])) / math.sqrt(
        feats.shape[1]
    )
    bias = rng.normal(0.0, 0.3, descriptor_dim)
    descriptors = np.tanh(feats @ proj.T + bias)
    descriptors = descriptors + params.descriptor_noise * rng.standard_normal(
        descriptors.shape
    )
    scenes = [
        Scene(scene_id=i, descriptor=descriptors[i], landscape=specs[i])
        for i in range(n_scenes)
    ]
    return SceneSet(scenes=scenes, descriptor_dim=descriptor_dim)
