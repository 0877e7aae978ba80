"""Conditional score / energy networks with hand-written forward and backward.

The backbone is a residual MLP: an input affine layer, `blocks` pre-norm
residual blocks (layer norm, affine, ReLU, affine, identity skip), a final
layer norm, and a zero-initialized linear head. Inputs are the concatenation
of a scene descriptor and a sinusoidal embedding of the noised pose delta.
No autodiff framework is involved; gradients are coded explicitly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .adam import AdamState, adam_step
from .geometry import wrap_angles
from .landscape import DomainBox, SceneSet

LN_EPS = 1e-5


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""


def sinusoidal_embedding(poses, num_freqs: int = 6) -> np.ndarray:
    """Dyadic sin/cos features of a pose delta, (..., 3) -> (..., 6 * num_freqs).

    The longitude coordinate is wrapped first, so embeddings of dphi and
    dphi + 2*pi are bitwise identical.
    """
    p = np.array(poses, dtype=float)
    p[..., 1] = wrap_angles(p[..., 1])
    freqs = 2.0 ** np.arange(num_freqs)
    ang = p[..., :, None] * freqs  # (..., 3, L)
    emb = np.stack([np.sin(ang), np.cos(ang)], axis=-1)  # (..., 3, L, 2)
    return emb.reshape(*p.shape[:-1], 6 * num_freqs)


def _embedding_jacobian(pose, num_freqs: int) -> np.ndarray:
    """d embedding / d pose, shape (6 * num_freqs, 3)."""
    p = np.array(pose, dtype=float)
    p[1] = float(wrap_angles(p[1]))
    freqs = 2.0 ** np.arange(num_freqs)
    jac = np.zeros((3, num_freqs, 2, 3))
    for c in range(3):
        ang = p[c] * freqs
        jac[c, :, 0, c] = freqs * np.cos(ang)
        jac[c, :, 1, c] = -freqs * np.sin(ang)
    return jac.reshape(6 * num_freqs, 3)


@dataclass(frozen=True)
class NetConfig:
    descriptor_dim: int
    out_dim: int
    width: int = 256
    blocks: int = 3
    num_freqs: int = 6

    @property
    def input_dim(self) -> int:
        return self.descriptor_dim + 6 * self.num_freqs


def _layout(cfg: NetConfig) -> list[tuple[str, tuple[int, ...]]]:
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("stem_w", (cfg.width, cfg.input_dim)),
        ("stem_b", (cfg.width,)),
    ]
    for i in range(cfg.blocks):
        shapes += [
            (f"b{i}_ln_g", (cfg.width,)),
            (f"b{i}_ln_b", (cfg.width,)),
            (f"b{i}_w1", (cfg.width, cfg.width)),
            (f"b{i}_b1", (cfg.width,)),
            (f"b{i}_w2", (cfg.width, cfg.width)),
            (f"b{i}_b2", (cfg.width,)),
        ]
    shapes += [
        ("out_ln_g", (cfg.width,)),
        ("out_ln_b", (cfg.width,)),
        ("head_w", (cfg.out_dim, cfg.width)),
        ("head_b", (cfg.out_dim,)),
    ]
    return shapes


def _ln_forward(h: np.ndarray, g: np.ndarray, b: np.ndarray):
    mu = h.mean(axis=-1, keepdims=True)
    xc = h - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, xhat, inv


def _ln_backward(dy, xhat, inv, g):
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dyg = dy * g
    n = xhat.shape[-1]
    dx = inv * (
        dyg
        - dyg.mean(axis=-1, keepdims=True)
        - xhat * (dyg * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


class PoseConditionedNet:
    """Residual MLP over (descriptor, embedded pose) with a flat parameter vector."""

    def __init__(self, cfg: NetConfig, params: np.ndarray):
        self.cfg = cfg
        expected = sum(int(np.prod(s)) for _, s in _layout(cfg))
        if params.shape != (expected,):
            raise ValueError(f"expected {expected} parameters, got {params.shape}")
        self.params = params
        self.views: dict[str, np.ndarray] = {}
        off = 0
        for name, shape in _layout(cfg):
            n = int(np.prod(shape))
            self.views[name] = self.params[off : off + n].reshape(shape)
            off += n

    @property
    def n_params(self) -> int:
        return self.params.size

    @classmethod
    def create(cls, cfg: NetConfig, rng: np.random.Generator) -> "PoseConditionedNet":
        chunks = []
        for name, shape in _layout(cfg):
            n = int(np.prod(shape))
            if name.endswith("ln_g"):
                chunks.append(np.ones(n))
            elif name in ("head_w", "head_b"):
                chunks.append(np.zeros(n))
            elif name.endswith("_w") or "_w" in name:
                bound = 1.0 / math.sqrt(shape[1])
                chunks.append(rng.uniform(-bound, bound, n))
            else:
                chunks.append(np.zeros(n))
        return cls(cfg, np.concatenate(chunks))

    def _check_inputs(self, desc: np.ndarray, poses: np.ndarray):
        if desc.shape[-1] != self.cfg.descriptor_dim:
            raise ValueError(
                f"descriptor dim {desc.shape[-1]} != {self.cfg.descriptor_dim}"
            )
        if poses.shape[-1] != 3:
            raise ValueError("poses must have 3 components")

    def forward(self, desc, poses) -> np.ndarray:
        out, _ = self.forward_cached(desc, poses)
        return out

    def forward_cached(self, desc, poses):
        desc = np.atleast_2d(np.asarray(desc, dtype=float))
        poses = np.atleast_2d(np.asarray(poses, dtype=float))
        self._check_inputs(desc, poses)
        v = self.views
        x = np.concatenate([desc, sinusoidal_embedding(poses, self.cfg.num_freqs)], axis=1)
        h = x @ v["stem_w"].T + v["stem_b"]
        cache = {"x": x, "h0": h, "blocks": []}
        for i in range(self.cfg.blocks):
            n, xhat, inv = _ln_forward(h, v[f"b{i}_ln_g"], v[f"b{i}_ln_b"])
            u = n @ v[f"b{i}_w1"].T + v[f"b{i}_b1"]
            r = np.maximum(u, 0.0)
            h = h + r @ v[f"b{i}_w2"].T + v[f"b{i}_b2"]
            cache["blocks"].append({"n": n, "xhat": xhat, "inv": inv, "u": u, "r": r})
        hf, xhat, inv = _ln_forward(h, v["out_ln_g"], v["out_ln_b"])
        cache["out_ln"] = (xhat, inv)
        cache["hf"] = hf
        out = hf @ v["head_w"].T + v["head_b"]
        return out, cache

    def backward(self, cache, dout: np.ndarray, with_input_grad: bool = False):
        """Accumulate dL/dparams (flat) given dL/dout; optionally also dL/dx."""
        v = self.views
        grads = {name: np.zeros_like(arr) for name, arr in v.items()}
        hf = cache["hf"]
        grads["head_w"] += dout.T @ hf
        grads["head_b"] += dout.sum(axis=0)
        dhf = dout @ v["head_w"]
        xhat, inv = cache["out_ln"]
        dh, dg, db = _ln_backward(dhf, xhat, inv, v["out_ln_g"])
        grads["out_ln_g"] += dg
        grads["out_ln_b"] += db
        for i in reversed(range(self.cfg.blocks)):
            blk = cache["blocks"][i]
            dr = dh @ v[f"b{i}_w2"]
            grads[f"b{i}_w2"] += dh.T @ blk["r"]
            grads[f"b{i}_b2"] += dh.sum(axis=0)
            du = dr * (blk["u"] > 0.0)
            grads[f"b{i}_w1"] += du.T @ blk["n"]
            grads[f"b{i}_b1"] += du.sum(axis=0)
            dn = du @ v[f"b{i}_w1"]
            dskip, dg, db = _ln_backward(dn, blk["xhat"], blk["inv"], v[f"b{i}_ln_g"])
            grads[f"b{i}_ln_g"] += dg
            grads[f"b{i}_ln_b"] += db
            dh = dh + dskip
        grads["stem_w"] += dh.T @ cache["x"]
        grads["stem_b"] += dh.sum(axis=0)
        flat = np.concatenate([grads[name].ravel() for name, _ in _layout(self.cfg)])
        if not with_input_grad:
            return flat
        dx = dh @ v["stem_w"]
        return flat, dx

    def input_grad(self, desc, pose) -> np.ndarray:
        """Jacobian of the outputs with respect to the pose delta, (out_dim, 3)."""
        desc = np.asarray(desc, dtype=float).reshape(1, -1)
        pose = np.asarray(pose, dtype=float).reshape(3)
        _, cache = self.forward_cached(desc, pose[None, :])
        jac_emb = _embedding_jacobian(pose, self.cfg.num_freqs)
        out = np.zeros((self.cfg.out_dim, 3))
        for j in range(self.cfg.out_dim):
            seed = np.zeros((1, self.cfg.out_dim))
            seed[0, j] = 1.0
            _, dx = self.backward(cache, seed, with_input_grad=True)
            out[j] = dx[0, self.cfg.descriptor_dim :] @ jac_emb
        return out


def make_score_network(
    descriptor_dim: int,
    rng: np.random.Generator,
    width: int = 256,
    blocks: int = 3,
    num_freqs: int = 6,
) -> PoseConditionedNet:
    cfg = NetConfig(descriptor_dim, 3, width=width, blocks=blocks, num_freqs=num_freqs)
    return PoseConditionedNet.create(cfg, rng)


def make_energy_network(
    descriptor_dim: int,
    rng: np.random.Generator,
    width: int = 256,
    blocks: int = 3,
    num_freqs: int = 6,
) -> PoseConditionedNet:
    cfg = NetConfig(descriptor_dim, 1, width=width, blocks=blocks, num_freqs=num_freqs)
    return PoseConditionedNet.create(cfg, rng)


def dsm_target(x, x_tilde, sigma: float) -> np.ndarray:
    """Score-matching regression target (x - x~)/sigma^2, shorter arc in longitude."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(x_tilde, dtype=float)
    d = np.array(d)
    d[..., 1] = wrap_angles(d[..., 1])
    return d / (sigma * sigma)


def energy_target(x, x_tilde, sigma: float) -> np.ndarray:
    """Energy regression target: wrapped squared distance over 2 sigma^2."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    d = np.asarray(x, dtype=float) - np.asarray(x_tilde, dtype=float)
    d = np.array(d)
    d[..., 1] = wrap_angles(d[..., 1])
    return (d * d).sum(axis=-1) / (2.0 * sigma * sigma)


@dataclass
class TrainConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 256
    epochs: int = 60
    sigma: float = 1.0
    domain: DomainBox = field(default_factory=DomainBox)
    steps_per_epoch: int = 50
    seed: int = 0

    def __post_init__(self):
        if min(self.lr, self.batch_size, self.epochs, self.sigma, self.steps_per_epoch) <= 0:
            raise ValueError("train config values must be positive")


@dataclass
class TrainState:
    """Everything needed to resume training deterministically."""

    adam: AdamState
    rng_state: dict
    epochs_done: int
    loss_curve: list[float]


def train(
    net: PoseConditionedNet,
    scenes: SceneSet,
    cfg: TrainConfig,
    mode: str = "score",
    state: TrainState | None = None,
) -> TrainState:
    """DSM (score) or energy-regression training with Adam; mutates net.params.

    Each step draws a batch of scenes with replacement and one uniformly
    sampled noised pose per element. Resuming from a TrainState continues the
    run bit-for-bit.
    """
    if mode not in ("score", "energy"):
        raise ValueError(f"unknown training mode {mode!r}")
    if len(scenes) == 0:
        raise ValueError("scene set is empty")
    expected_out = 3 if mode == "score" else 1
    if net.cfg.out_dim != expected_out:
        raise ValueError(f"{mode} mode needs out_dim={expected_out}")

    descriptors = scenes.descriptors()
    gts = scenes.gts()
    rng = np.random.default_rng(cfg.seed)
    if state is None:
        state = TrainState(
            adam=AdamState.zeros(net.n_params),
            rng_state=rng.bit_generator.state,
            epochs_done=0,
            loss_curve=[],
        )
    rng.bit_generator.state = state.rng_state

    n = len(scenes)
    inv_sig2 = 1.0 / (cfg.sigma * cfg.sigma)
    for _epoch in range(state.epochs_done, cfg.epochs):
        epoch_losses = np.empty(cfg.steps_per_epoch)
        for step in range(cfg.steps_per_epoch):
            idx = rng.integers(0, n, cfg.batch_size)
            x = gts[idx]
            x_tilde = cfg.domain.sample(rng, cfg.batch_size)
            pred, cache = net.forward_cached(descriptors[idx], x_tilde)
            if mode == "score":
                target = dsm_target(x, x_tilde, cfg.sigma)
            else:
                target = energy_target(x, x_tilde, cfg.sigma)[:, None]
            resid = pred - target
            loss = 0.5 * float((resid * resid).sum(axis=1).mean())
            if not math.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {_epoch}, step {step}"
                )
            grad = net.backward(cache, resid / cfg.batch_size)
            adam_step(net.params, grad, state.adam, cfg.lr, cfg.beta1, cfg.beta2)
            epoch_losses[step] = loss
        state.loss_curve.append(float(epoch_losses.mean()))
        state.epochs_done = _epoch + 1
        state.rng_state = rng.bit_generator.state
    return state


def score_field_mse(
    net: PoseConditionedNet,
    scenes: SceneSet,
    sigma: float = 1.0,
    n_samples: int = 2000,
    seed: int = 1234,
    domain: DomainBox | None = None,
) -> float:
    """Held-out mean squared deviation of the net from the Dirac oracle score."""
    domain = domain or DomainBox()
    rng = np.random.default_rng(seed)
    descriptors = scenes.descriptors()
    gts = scenes.gts()
    idx = rng.integers(0, len(scenes), n_samples)
    x_tilde = domain.sample(rng, n_samples)
    target = dsm_target(gts[idx], x_tilde, sigma)
    pred = net.forward(descriptors[idx], x_tilde)
    return float(((pred - target) ** 2).sum(axis=1).mean())


def mean_score_angle(pred: np.ndarray, oracle: np.ndarray) -> float:
    """Mean angle in radians between predicted and oracle score directions."""
    pn = np.linalg.norm(pred, axis=1)
    on = np.linalg.norm(oracle, axis=1)
    keep = (pn > 1e-12) & (on > 1e-12)
    cos = (pred[keep] * oracle[keep]).sum(axis=1) / (pn[keep] * on[keep])
    return float(np.arccos(np.clip(cos, -1.0, 1.0)).mean())
