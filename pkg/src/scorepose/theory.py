"""Numerical checks of the optimal-score identities and the Langevin decay law.

Everything here is pure oracle math on finite discrete supports: no trained
network is involved. Pose deltas are treated as plain 3-vectors; the longitude
coordinate still uses shorter-arc differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import wrap_angles


class WeightUnderflowError(ArithmeticError):
    """All posterior kernel weights underflowed to zero."""


@dataclass(frozen=True)
class DiscreteConditional:
    """Finite-support conditional p(x | y) with Gaussian smoothing scale sigma."""

    points: np.ndarray  # (n, 3)
    probs: np.ndarray  # (n,)
    sigma: float = 1.0

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pr = np.asarray(self.probs, dtype=float)
        if pts.shape[1] != 3 or pr.shape != (pts.shape[0],):
            raise ValueError("points must be (n, 3) with matching probs")
        if (pr < 0).any():
            raise ValueError("probs must be nonnegative")
        if abs(pr.sum() - 1.0) > 1e-9:
            raise ValueError("probs must sum to 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)

    @classmethod
    def dirac(cls, point, sigma: float = 1.0) -> "DiscreteConditional":
        return cls(np.asarray(point, float)[None, :], np.array([1.0]), sigma)


def _wrapped_diffs(d: DiscreteConditional, x_tilde: np.ndarray) -> np.ndarray:
    """(x_i - x_tilde) rows for every support point, shorter arc in longitude."""
    diff = d.points[None, :, :] - x_tilde[:, None, :]
    diff[:, :, 1] = wrap_angles(diff[:, :, 1])
    return diff


def optimal_score_posterior(d: DiscreteConditional, x_tilde) -> np.ndarray:
    """Posterior-weighted optimal score: sum_i w_i (x_i - x~)/sigma^2 with
    w_i proportional to p_i * N(x~; x_i, sigma^2 I), via log-sum-exp."""
    xt = np.atleast_2d(np.asarray(x_tilde, dtype=float))
    diff = _wrapped_diffs(d, xt)
    with np.errstate(divide="ignore"):
        logw = np.log(d.probs)[None, :] - (diff**2).sum(axis=2) / (2 * d.sigma**2)
    if not np.isfinite(logw).any(axis=1).all():
        raise WeightUnderflowError("no support point has finite posterior weight")
    logw = logw - logw.max(axis=1, keepdims=True)
    w = np.exp(logw)
    w = w / w.sum(axis=1, keepdims=True)
    score = (w[:, :, None] * diff).sum(axis=1) / d.sigma**2
    return score[0] if np.asarray(x_tilde).ndim == 1 else score


def optimal_score_prior(d: DiscreteConditional, x_tilde) -> np.ndarray:
    """Prior-weighted optimal score under uniform noised-pose sampling:
    sum_i p_i (x_i - x~)/sigma^2."""
    xt = np.atleast_2d(np.asarray(x_tilde, dtype=float))
    diff = _wrapped_diffs(d, xt)
    score = (d.probs[None, :, None] * diff).sum(axis=1) / d.sigma**2
    return score[0] if np.asarray(x_tilde).ndim == 1 else score


def smoothed_log_density(d: DiscreteConditional, x_tilde) -> np.ndarray:
    """log of the Gaussian-smoothed discrete density (up to the constant factor)."""
    xt = np.atleast_2d(np.asarray(x_tilde, dtype=float))
    diff = _wrapped_diffs(d, xt)
    with np.errstate(divide="ignore"):
        logterms = np.log(d.probs)[None, :] - (diff**2).sum(axis=2) / (2 * d.sigma**2)
    m = logterms.max(axis=1)
    out = m + np.log(np.exp(logterms - m[:, None]).sum(axis=1))
    return out[0] if np.asarray(x_tilde).ndim == 1 else out


@dataclass
class Lemma2Report:
    dirac_max_diff: float
    mixture_max_diff: float
    tol: float
    passed: bool


def verify_lemma2(
    grid_points,
    dirac_d: DiscreteConditional,
    mixture_d: DiscreteConditional,
    tol: float = 1e-12,
) -> Lemma2Report:
    """Posterior and prior optimal scores coincide iff the conditional is Dirac."""
    pts = np.atleast_2d(np.asarray(grid_points, dtype=float))
    d_diff = np.abs(
        optimal_score_posterior(dirac_d, pts) - optimal_score_prior(dirac_d, pts)
    ).max()
    m_diff = np.abs(
        optimal_score_posterior(mixture_d, pts) - optimal_score_prior(mixture_d, pts)
    ).max()
    passed = (d_diff < tol) and (m_diff > 10 * tol)
    return Lemma2Report(float(d_diff), float(m_diff), tol, bool(passed))


def default_grid(n_per_axis: int = 50) -> np.ndarray:
    """Cube grid over the standard sampling box with n^3 points."""
    t = np.linspace(-math.pi / 3, math.pi / 3, n_per_axis)
    p = np.linspace(-math.pi + 1e-6, math.pi, n_per_axis)
    r = np.linspace(1.2, 2.0, n_per_axis)
    tt, pp, rr = np.meshgrid(t, p, r, indexing="ij")
    return np.stack([tt.ravel(), pp.ravel(), rr.ravel()], axis=1)


@dataclass
class DecayReport:
    alpha: float
    gamma: tuple[float, float, float]
    iters: int
    n_chains: int
    slope_measured: float | None
    slope_expected: float | None
    slope_abs_err: float | None
    final_ratio: float
    expected_ratio: float
    mean_curve_max_dev: float | None
    var_measured: dict
    var_predicted: dict
    passed: bool
    details: dict = field(default_factory=dict)


def simulate_chains(
    alpha: float,
    gamma,
    gt: np.ndarray,
    init: np.ndarray,
    iters: int,
    n_chains: int,
    rng: np.random.Generator,
    burn_in: int = 0,
):
    """Vectorized oracle-score Langevin chains in plain R^3.

    Returns the per-step mean iterate (iters+1, 3) and pooled per-coordinate
    second moments over steps > burn_in for variance estimation.
    """
    g = np.asarray(gamma, dtype=float)
    x = np.tile(np.asarray(init, float), (n_chains, 1))
    means = np.empty((iters + 1, 3))
    means[0] = x.mean(axis=0)
    sum1 = np.zeros(3)
    sum2 = np.zeros(3)
    count = 0
    for t in range(1, iters + 1):
        x = x + alpha * (gt - x)
        if g.any():
            x = x + g * rng.standard_normal((n_chains, 3))
        means[t] = x.mean(axis=0)
        if t > burn_in:
            sum1 += x.sum(axis=0)
            sum2 += (x**2).sum(axis=0)
            count += n_chains
    var = None
    if count > 0:
        mu = sum1 / count
        var = sum2 / count - mu**2
    return means, var


def verify_decay(
    alpha: float = 0.1,
    iters: int = 50,
    n_chains: int = 1,
    gamma=(0.0, 0.0, 0.0),
    gt=(0.2, 1.0, 1.6),
    init=(0.0, 0.0, 1.2),
    seed: int = 0,
    burn_in: int | None = None,
    slope_tol: float = 1e-8,
    var_rel_tol: float = 0.10,
) -> DecayReport:
    """Check the exponential mean-error decay and the stationary-variance law.

    With gamma == 0 the log error must be affine in t with slope log(1 - alpha)
    (exactly, up to floating-point accumulation). With noise, the mean-error
    curve must track M (1-alpha)^t within 5/sqrt(n_chains) of the initial error
    M, and the variance of each noisy coordinate must be within var_rel_tol of
    G^2 / (2 alpha).
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    g = np.asarray(gamma, dtype=float)
    gt_a = np.asarray(gt, dtype=float)
    init_a = np.asarray(init, dtype=float)
    m0 = float(np.linalg.norm(init_a - gt_a))
    noiseless = not g.any()
    if burn_in is None:
        burn_in = 0 if noiseless else max(iters // 2, min(200, iters - 1))
    rng = np.random.default_rng(seed)
    means, var = simulate_chains(
        alpha, g, gt_a, init_a, iters, 1 if noiseless else n_chains, rng, burn_in
    )
    errs = np.linalg.norm(means - gt_a, axis=1)
    final_ratio = float(errs[-1] / m0) if m0 > 0 else 0.0
    expected_ratio = float((1.0 - alpha) ** iters)

    slope_measured = slope_expected = slope_err = None
    mean_dev = None
    var_measured: dict = {}
    var_predicted: dict = {}
    if noiseless:
        if alpha == 1.0:
            passed = errs[1] == 0.0
        else:
            t = np.arange(iters + 1)
            logs = np.log(errs / m0)
            slope_measured = float(np.polyfit(t, logs, 1)[0])
            slope_expected = math.log(1.0 - alpha)
            slope_err = abs(slope_measured - slope_expected)
            passed = slope_err < slope_tol
    else:
        t = np.arange(iters + 1)
        predicted = m0 * (1.0 - alpha) ** t
        mean_dev = float(np.abs(errs - predicted).max() / m0)
        mean_ok = mean_dev < 5.0 / math.sqrt(n_chains)
        var_ok = True
        for i in np.flatnonzero(g):
            pred = g[i] ** 2 / (2.0 * alpha)
            var_measured[int(i)] = float(var[i])
            var_predicted[int(i)] = pred
            var_ok &= abs(var[i] / pred - 1.0) < var_rel_tol
        passed = mean_ok and var_ok
    return DecayReport(
        alpha=alpha,
        gamma=tuple(float(v) for v in g),
        iters=iters,
        n_chains=n_chains,
        slope_measured=slope_measured,
        slope_expected=slope_expected,
        slope_abs_err=slope_err,
        final_ratio=final_ratio,
        expected_ratio=expected_ratio,
        mean_curve_max_dev=mean_dev,
        var_measured=var_measured,
        var_predicted=var_predicted,
        passed=bool(passed),
        details={"burn_in": burn_in, "initial_error": m0},
    )


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference gradient of scalar f at x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def rel_err(a, b, floor: float = 1e-8) -> float:
    """Relative disagreement between two vectors, floored to dodge 0/0."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    denom = max(float(np.linalg.norm(a)), float(np.linalg.norm(b)), floor)
    return float(np.linalg.norm(a - b) / denom)


@dataclass
class GradientReport:
    landscape_max_rel_err: float
    score_param_max_rel_err: float
    energy_input_max_rel_err: float
    n_configs: int
    tol: float
    passed: bool


def gradient_checks(
    seed: int = 0, n_configs: int = 20, h: float = 1e-5, tol: float = 1e-4
) -> GradientReport:
    """Central-difference checks of every analytic gradient in the package:
    landscape energies, score-network parameter gradients (directional), and
    energy-network input gradients."""
    from .geometry import RelPose, wrap_angle
    from .landscape import DomainBox, LandscapeSpec, energy_array, energy_grad
    from .scorenet import make_energy_network, make_score_network

    rng = np.random.default_rng(seed)
    box = DomainBox()

    def sample_interior(spec: LandscapeSpec) -> np.ndarray:
        # resample until clear of the wrap seams opposite the well centres
        while True:
            x = np.array(
                [
                    rng.uniform(box.theta_min + 10 * h, box.theta_max - 10 * h),
                    rng.uniform(-math.pi, math.pi),
                    rng.uniform(box.rho_min + 10 * h, box.rho_max - 10 * h),
                ]
            )
            seam = wrap_angle(spec.gt.dphi + math.pi)
            if min(
                abs(wrap_angle(x[1] - seam)), abs(wrap_angle(x[1] - spec.gt.dphi))
            ) > 100 * h:
                return x

    landscape_err = 0.0
    modes = ("none", "bimodal", "plateau")
    for k in range(n_configs):
        spec = LandscapeSpec(
            gt=RelPose.from_array(box.sample(rng, 1)[0]),
            well_depth=float(rng.uniform(0.5, 1.5)),
            well_width=tuple(rng.uniform([0.3, 0.4, 0.2], [0.6, 0.9, 0.5])),
            symmetry_mode=modes[k % 3],
            depth_ratio=float(rng.uniform(0.5, 1.0)),
            roughness_amp=float(rng.uniform(0.0, 0.3)),
            roughness_freq=int(rng.integers(1, 5)),
        )
        x = sample_interior(spec)
        analytic = energy_grad(spec, RelPose.from_array(x))
        fd = fd_gradient(lambda v: float(energy_array(spec, v)), x, h)
        landscape_err = max(landscape_err, rel_err(analytic, fd))

    score_err = 0.0
    snet = make_score_network(8, rng, width=64, blocks=2)
    snet.params += 0.05 * rng.standard_normal(snet.n_params)
    for _ in range(n_configs):
        desc = rng.normal(size=(1, 8))
        pose = box.sample(rng, 1)
        v = rng.normal(size=(1, 3))
        _, cache = snet.forward_cached(desc, pose)
        g = snet.backward(cache, v)
        u = rng.standard_normal(snet.n_params)
        u /= np.linalg.norm(u)
        base = snet.params.copy()
        snet.params[:] = base + h * u
        up = float((snet.forward(desc, pose) * v).sum())
        snet.params[:] = base - h * u
        dn = float((snet.forward(desc, pose) * v).sum())
        snet.params[:] = base
        score_err = max(score_err, rel_err([(up - dn) / (2 * h)], [float(g @ u)]))

    energy_err = 0.0
    enet = make_energy_network(8, rng, width=64, blocks=2)
    enet.params += 0.05 * rng.standard_normal(enet.n_params)
    for _ in range(n_configs):
        desc = rng.normal(size=8)
        pose = box.sample(rng, 1)[0]
        analytic = enet.input_grad(desc, pose)[0]
        fd = fd_gradient(
            lambda p: float(enet.forward(desc[None, :], p[None, :])[0, 0]), pose, h
        )
        energy_err = max(energy_err, rel_err(analytic, fd))

    passed = max(landscape_err, score_err, energy_err) < tol
    return GradientReport(
        landscape_max_rel_err=landscape_err,
        score_param_max_rel_err=score_err,
        energy_input_max_rel_err=energy_err,
        n_configs=n_configs,
        tol=tol,
        passed=bool(passed),
    )
