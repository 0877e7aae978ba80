import math

import numpy as np
import pytest

from scorepose.geometry import wrap_angle, wrap_angles
from scorepose.landscape import DomainBox, make_scene_set
from scorepose.scorenet import (
    NetConfig,
    PoseConditionedNet,
    TrainConfig,
    TrainingDivergedError,
    dsm_target,
    energy_target,
    make_energy_network,
    make_score_network,
    mean_score_angle,
    score_field_mse,
    sinusoidal_embedding,
    train,
)
from scorepose.theory import rel_err


def small_net(out_dim=3, descriptor_dim=4, seed=0):
    cfg = NetConfig(descriptor_dim, out_dim, width=16, blocks=2, num_freqs=3)
    return PoseConditionedNet.create(cfg, np.random.default_rng(seed))


def test_embedding_examples():
    emb = sinusoidal_embedding(np.zeros(3), num_freqs=6)
    assert emb.shape == (36,)
    np.testing.assert_array_equal(emb[0::2], 0.0)
    np.testing.assert_array_equal(emb[1::2], 1.0)


def test_embedding_periodic_in_longitude():
    p = np.array([0.3, 2.0, 1.5])
    q = np.array([0.3, 2.0 + 2 * math.pi, 1.5])
    np.testing.assert_array_equal(
        sinusoidal_embedding(p), sinusoidal_embedding(q)
    )


def test_embedding_injective_at_grid_resolution():
    rng = np.random.default_rng(0)
    pts = DomainBox().sample(rng, 400)
    embs = sinusoidal_embedding(pts, num_freqs=6)
    d_pose = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
    d_emb = np.linalg.norm(embs[:, None, :] - embs[None, :, :], axis=2)
    mask = d_pose > 2 * math.pi / 2**6
    assert (d_emb[mask] > 1e-6).all()


def test_dsm_target_examples():
    t = dsm_target(np.array([0.5, 1.0, 1.5]), np.array([0.4, 1.2, 1.5]), 1.0)
    np.testing.assert_allclose(t, [0.1, -0.2, 0.0], atol=1e-12)
    np.testing.assert_array_equal(dsm_target(np.ones(3), np.ones(3), 1.0), 0.0)
    t = dsm_target(np.array([0.1, 0.0, 0.0]), np.zeros(3), 0.5)
    np.testing.assert_allclose(t, [0.4, 0.0, 0.0], atol=1e-12)
    with pytest.raises(ValueError):
        dsm_target(np.zeros(3), np.zeros(3), 0.0)


def test_dsm_target_uses_shorter_arc():
    x = np.array([0.0, 3.0, 0.0])
    xt = np.array([0.0, -3.0, 0.0])
    t = dsm_target(x, xt, 1.0)
    assert t[1] == pytest.approx(wrap_angle(6.0), abs=1e-12)


def test_energy_target_examples():
    v = energy_target(np.zeros(3), np.array([0.1, -0.2, 0.0]), 1.0)
    assert v == pytest.approx(0.025, abs=1e-15)
    assert energy_target(np.ones(3), np.ones(3), 1.0) == 0.0
    a = energy_target(np.zeros(3), np.array([0.1, -0.2, 0.0]), 2.0)
    assert a == pytest.approx(0.025 / 4.0, abs=1e-15)


def test_zero_initialized_head_outputs_zero():
    net = small_net()
    rng = np.random.default_rng(1)
    out = net.forward(rng.normal(size=(5, 4)), DomainBox().sample(rng, 5))
    np.testing.assert_array_equal(out, 0.0)


def test_forward_rejects_bad_dims():
    net = small_net()
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 7)), np.zeros((2, 3)))


def _randomized_net(out_dim, seed):
    net = small_net(out_dim=out_dim, seed=seed)
    rng = np.random.default_rng(seed + 100)
    net.params += 0.05 * rng.standard_normal(net.n_params)
    return net


@pytest.mark.parametrize("out_dim", [3, 1])
def test_parameter_gradients_match_finite_differences(out_dim):
    # scalar functional J = v . forward; exhaustive central differences
    net = _randomized_net(out_dim, seed=2)
    rng = np.random.default_rng(3)
    desc = rng.normal(size=(2, 4))
    poses = DomainBox().sample(rng, 2)
    v = rng.normal(size=(2, out_dim))

    def j(params):
        probe = PoseConditionedNet(net.cfg, params)
        return float((probe.forward(desc, poses) * v).sum())

    _, cache = net.forward_cached(desc, poses)
    analytic = net.backward(cache, v)
    h = 1e-6
    fd = np.zeros_like(analytic)
    base = net.params.copy()
    for i in range(base.size):
        up = base.copy()
        dn = base.copy()
        up[i] += h
        dn[i] -= h
        fd[i] = (j(up) - j(dn)) / (2 * h)
    assert rel_err(analytic, fd) < 1e-6


@pytest.mark.parametrize("out_dim", [3, 1])
def test_input_gradients_match_finite_differences(out_dim):
    net = _randomized_net(out_dim, seed=4)
    rng = np.random.default_rng(5)
    for _ in range(10):
        desc = rng.normal(size=4)
        pose = DomainBox().sample(rng, 1)[0]
        jac = net.input_grad(desc, pose)
        assert jac.shape == (out_dim, 3)
        h = 1e-6
        fd = np.zeros_like(jac)
        for c in range(3):
            up = pose.copy()
            dn = pose.copy()
            up[c] += h
            dn[c] -= h
            fd[:, c] = (net.forward(desc, up[None]) - net.forward(desc, dn[None]))[
                0
            ] / (2 * h)
        assert rel_err(jac.ravel(), fd.ravel()) < 1e-5


def test_train_one_scene_reaches_oracle():
    scenes = make_scene_set(1, descriptor_dim=8, seed=3)
    net = make_score_network(8, np.random.default_rng(1), width=64, blocks=2)
    cfg = TrainConfig(epochs=200, steps_per_epoch=40, batch_size=128, lr=3e-4, seed=0)
    state = train(net, scenes, cfg)
    assert score_field_mse(net, scenes, n_samples=4000) < 0.01
    first = np.mean(state.loss_curve[:10])
    last = np.mean(state.loss_curve[-10:])
    assert last < first


def test_train_is_bit_reproducible():
    scenes = make_scene_set(2, descriptor_dim=8, seed=5)
    cfg = TrainConfig(epochs=3, steps_per_epoch=5, batch_size=32, seed=9)
    n1 = make_score_network(8, np.random.default_rng(2), width=16, blocks=1)
    n2 = make_score_network(8, np.random.default_rng(2), width=16, blocks=1)
    s1 = train(n1, scenes, cfg)
    s2 = train(n2, scenes, cfg)
    assert s1.loss_curve == s2.loss_curve
    np.testing.assert_array_equal(n1.params, n2.params)


def test_train_resume_matches_uninterrupted():
    scenes = make_scene_set(2, descriptor_dim=8, seed=5)
    full_cfg = TrainConfig(epochs=6, steps_per_epoch=5, batch_size=32, seed=9)
    half_cfg = TrainConfig(epochs=3, steps_per_epoch=5, batch_size=32, seed=9)

    a = make_score_network(8, np.random.default_rng(2), width=16, blocks=1)
    sa = train(a, scenes, full_cfg)

    b = make_score_network(8, np.random.default_rng(2), width=16, blocks=1)
    sb = train(b, scenes, half_cfg)
    sb = train(b, scenes, full_cfg, state=sb)

    assert sa.loss_curve == sb.loss_curve
    np.testing.assert_array_equal(a.params, b.params)


def test_train_validates_mode_and_scenes():
    scenes = make_scene_set(1, descriptor_dim=8, seed=0)
    net = make_score_network(8, np.random.default_rng(0), width=16, blocks=1)
    with pytest.raises(ValueError):
        train(net, scenes, TrainConfig(epochs=1), mode="bogus")
    enet = make_energy_network(8, np.random.default_rng(0), width=16, blocks=1)
    with pytest.raises(ValueError):
        train(enet, scenes, TrainConfig(epochs=1), mode="score")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_divergence_raises():
    scenes = make_scene_set(1, descriptor_dim=8, seed=0)
    net = make_score_network(8, np.random.default_rng(0), width=16, blocks=1)
    net.params += 1e200
    with pytest.raises(TrainingDivergedError):
        train(net, scenes, TrainConfig(epochs=2, steps_per_epoch=3, lr=1e30))


def test_energy_mode_learns_score_by_differentiation():
    scenes = make_scene_set(1, descriptor_dim=8, seed=3)
    enet = make_energy_network(8, np.random.default_rng(1), width=64, blocks=2)
    cfg = TrainConfig(epochs=60, steps_per_epoch=40, batch_size=128, lr=3e-4, seed=0)
    train(enet, scenes, cfg, mode="energy")
    gt = scenes.gts()[0]
    desc = scenes.descriptors()[0]
    rng = np.random.default_rng(5)
    pts = DomainBox().sample(rng, 400)
    keep = (
        (np.abs(wrap_angles(pts[:, 1] - gt[1])) < 2.6)
        & (np.abs(pts[:, 0]) < 0.9)
        & (pts[:, 2] > 1.25)
        & (pts[:, 2] < 1.95)
    )
    pts = pts[keep]
    cosines = []
    for p in pts:
        s = -enet.input_grad(desc, p)[0]
        o = gt - p
        o[1] = wrap_angle(o[1])
        cosines.append(s @ o / (np.linalg.norm(s) * np.linalg.norm(o) + 1e-12))
    assert np.mean(cosines) > 0.95


def test_score_mode_beats_energy_mode_directionally():
    # identical data and budget; score-predicting net should align better
    scenes = make_scene_set(10, descriptor_dim=16, seed=11)
    cfg = TrainConfig(epochs=50, steps_per_epoch=30, batch_size=128, lr=3e-4, seed=0)
    snet = make_score_network(16, np.random.default_rng(7), width=64, blocks=2)
    enet = make_energy_network(16, np.random.default_rng(7), width=64, blocks=2)
    train(snet, scenes, cfg, mode="score")
    train(enet, scenes, cfg, mode="energy")

    rng = np.random.default_rng(13)
    idx = rng.integers(0, len(scenes), 300)
    pts = DomainBox().sample(rng, 300)
    gts = scenes.gts()[idx]
    descs = scenes.descriptors()[idx]
    oracle = gts - pts
    oracle[:, 1] = wrap_angles(oracle[:, 1])
    interior = np.abs(wrap_angles(pts[:, 1] - gts[:, 1])) < 2.6
    s_pred = snet.forward(descs, pts)
    e_pred = np.stack([-enet.input_grad(d, p)[0] for d, p in zip(descs, pts)])
    a_score = mean_score_angle(s_pred[interior], oracle[interior])
    a_energy = mean_score_angle(e_pred[interior], oracle[interior])
    assert a_score < a_energy
