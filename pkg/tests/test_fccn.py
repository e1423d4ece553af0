import numpy as np
import pytest
from scipy.special import logit

from ccnlab.ccn import TrainConfig, train_ccn
from ccnlab.data import Dataset
from ccnlab.fccn import (FccnConfig, FccnHeads, assign_loss,
                         build_representation, estimate_w1, train_fccn,
                         wass_loss)
from ccnlab.nets import AdamState, DenseNet
from ccnlab.scenarios import ScenarioConfig, generate_scenario


def toy_dataset(n=240, p=3, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, p))
    t = (x[:, 0] + 0.3 * rng.normal(size=n) > 0).astype(int)
    t[0], t[1] = 0, 1
    y = x.sum(axis=1) + t + rng.normal(size=n)
    return Dataset(x, t, y)


def zeroed_heads(p=3, **kw):
    heads = FccnHeads(p, FccnConfig(**kw), rng=0)
    for net in heads.nets().values():
        net.params[:] = 0.0
    return heads


# ---------------------------------------------------------------- config


def test_config_validation():
    with pytest.raises(ValueError, match="non-negative"):
        FccnConfig(alpha=-1.0)
    with pytest.raises(ValueError, match="critic_steps"):
        FccnConfig(critic_steps=0)
    with pytest.raises(ValueError, match="clip_bound"):
        FccnConfig(clip_bound=0.0)
    with pytest.raises(ValueError, match="q_w"):
        FccnConfig(q_w=0)


def test_raw_features_requires_disabled_adjustments():
    data = toy_dataset()
    bad = FccnConfig(raw_features=True)  # defaults leave adjustments on
    with pytest.raises(ValueError, match="raw_features"):
        train_fccn(data, TrainConfig(epochs=1, hidden=(4,)), bad)


# ---------------------------------------------------------------- representation


def test_representation_shape_and_range():
    heads = FccnHeads(4, FccnConfig(q_w=2, q_a=3, phi_hidden=(8,)), rng=1)
    rep = build_representation(heads, np.random.default_rng(0).normal(size=(11, 4)))
    assert rep.shape == (11, 6)
    assert np.all(rep[:, -1] > 0) and np.all(rep[:, -1] < 1)


def test_zero_weight_representation():
    heads = zeroed_heads(p=3, q_w=2, q_a=3, phi_hidden=(8,))
    rep = build_representation(heads, np.zeros((1, 3)) + 1.7)
    np.testing.assert_allclose(rep, [[0, 0, 0, 0, 0, 0.5]], atol=1e-15)


def test_feature_dim_drops_propensity_coord():
    heads = FccnHeads(3, FccnConfig(q_w=5, q_a=4, propensity_coord=False,
                                    phi_hidden=(6,)), rng=0)
    assert heads.feature_dim == 9
    rep = heads.represent(np.zeros((2, 3)))
    assert rep.shape == (2, 9)


# ---------------------------------------------------------------- losses


def test_wass_loss_empty_batch_warns():
    heads = zeroed_heads()
    with pytest.warns(RuntimeWarning, match="empty arm"):
        value = wass_loss(heads.critic, np.empty((0, 25)), np.ones((3, 25)))
    assert value == 0.0


def test_wass_loss_identical_batches_is_zero():
    critic = DenseNet((4, 8, 1), "relu", "identity", rng=3)
    rep = np.random.default_rng(0).normal(size=(10, 4))
    assert wass_loss(critic, rep, rep) == pytest.approx(0.0, abs=1e-15)


def test_wass_loss_swap_negates():
    critic = DenseNet((2, 6, 1), "relu", "identity", rng=5)
    rng = np.random.default_rng(1)
    a, b = rng.normal(size=(8, 2)), rng.normal(size=(9, 2))
    assert wass_loss(critic, a, b) == pytest.approx(-wass_loss(critic, b, a), abs=1e-15)


def test_wass_loss_training_respects_clip():
    critic = DenseNet((1, 16, 1), "relu", "identity", rng=2)
    opt = AdamState.for_net(critic)
    rng = np.random.default_rng(0)
    gap = wass_loss(critic, rng.uniform(1, 2, (50, 1)), rng.uniform(0, 1, (50, 1)),
                    optimizer=opt, critic_steps=40, clip_bound=0.01)
    assert np.max(np.abs(critic.params)) <= 0.01 + 1e-15
    assert gap > 0.0  # treated sits above control, critic finds the direction


def test_assign_loss_values():
    heads = zeroed_heads()  # e outputs 0.5 everywhere
    rep = np.random.default_rng(0).normal(size=(6, 25))
    t = np.array([0, 1, 1, 0, 1, 0])
    assert assign_loss(heads.e_head, rep, t) == pytest.approx(np.log(2.0), abs=1e-12)
    # single datum with e = 0.9 via the output bias
    heads.e_head.params[-1] = logit(0.9)
    single = assign_loss(heads.e_head, np.zeros((1, 25)), np.array([1]))
    assert single == pytest.approx(-np.log(0.9), abs=1e-12)


# ---------------------------------------------------------------- reduction and training


def test_reduction_matches_ccn_bit_for_bit():
    data = toy_dataset(n=200, seed=3)
    tc = TrainConfig(epochs=12, batch_size=64, z_draws=4, hidden=(8,), seed=9)
    plain = train_ccn(data, tc)
    reduced = train_fccn(data, tc, FccnConfig(alpha=0.0, beta=0.0,
                                              propensity_coord=False,
                                              raw_features=True))
    np.testing.assert_array_equal(plain.g0.params, reduced.g0.params)
    np.testing.assert_array_equal(plain.g1.params, reduced.g1.params)
    assert reduced.heads is None
    assert plain.train_info == reduced.train_info


def test_fccn_training_smoke_and_critic_bound():
    data = toy_dataset(n=300, seed=1)
    tc = TrainConfig(epochs=8, batch_size=100, z_draws=4, hidden=(16,), seed=4)
    fc = FccnConfig(alpha=1e-4, beta=5e-3, q_w=6, q_a=6, phi_hidden=(16,),
                    critic_hidden=(16, 8), critic_steps=3)
    model = train_fccn(data, tc, fc)
    assert np.max(np.abs(model.heads.critic.params)) <= fc.clip_bound + 1e-15
    assert model.train_info["adjustment"]["alpha"] == 1e-4
    # queries run end to end on the learned representation
    from ccnlab.ccn import estimate_cdf
    curve = estimate_cdf(model, data.x[:1], arm=1, grid_size=51)
    assert np.all(np.diff(curve.p) >= 0)


def test_fccn_deterministic():
    data = toy_dataset(n=200, seed=6)
    tc = TrainConfig(epochs=6, batch_size=64, z_draws=3, hidden=(8,), seed=2)
    fc = FccnConfig(alpha=1e-4, beta=5e-3, q_w=4, q_a=4, phi_hidden=(8,),
                    critic_hidden=(8, 4), critic_steps=2)
    m1 = train_fccn(data, tc, fc)
    m2 = train_fccn(data, tc, fc)
    np.testing.assert_array_equal(m1.g0.params, m2.g0.params)
    np.testing.assert_array_equal(m1.heads.phi_w.params, m2.heads.phi_w.params)
    np.testing.assert_array_equal(m1.heads.e_head.params, m2.heads.e_head.params)


def test_separable_assignment_learns_propensity():
    # deterministic rule t = 1{x1 > 0}; the e head should recover it
    rng = np.random.default_rng(8)
    n = 1200
    x = rng.normal(size=(n, 3))
    t = (x[:, 0] > 0).astype(int)
    y = x[:, 1] + t + 0.5 * rng.normal(size=n)
    data = Dataset(x, t, y)
    # assignment weight large enough that it, not the outcome loss, shapes phi_a
    tc = TrainConfig(epochs=120, batch_size=256, z_draws=2, hidden=(16,),
                     patience=120, seed=0)
    fc = FccnConfig(alpha=0.0, beta=0.5, q_w=8, q_a=8, phi_hidden=(32,))
    model = train_fccn(data, tc, fc)
    heads = model.heads
    holdout = rng.normal(size=(800, 3))
    e = heads.e_head.forward(heads.phi_a.forward(holdout)).ravel()
    truth = (holdout[:, 0] > 0).astype(float)
    accuracy = float(np.mean((e > 0.5) == (truth > 0.5)))
    assert accuracy >= 0.95
    loss = assign_loss(heads.e_head, heads.phi_a.forward(data.x), data.t)
    assert loss <= 0.1


def test_propensity_calibration_on_logistic_assignment():
    data, _ = generate_scenario("logistic", ScenarioConfig(n=8000, seed=2))
    tc = TrainConfig(epochs=40, batch_size=512, z_draws=4, patience=40, seed=0)
    model = train_fccn(data, tc, FccnConfig(alpha=0.0, beta=5e-3))
    heads = model.heads
    e = heads.e_head.forward(heads.phi_a.forward(data.x)).ravel()
    bins = np.clip((e * 10).astype(int), 0, 9)
    for decile in range(10):
        mask = bins == decile
        if mask.sum() >= 20:
            assert abs(e[mask].mean() - data.t[mask].mean()) <= 0.1


# ---------------------------------------------------------------- W1 estimation


def test_estimate_w1_identical_near_zero():
    rng = np.random.default_rng(0)
    sample = rng.normal(size=400)
    other = rng.normal(size=400)
    w = estimate_w1(sample, other, critic_steps=800, seed=1)
    assert abs(w) <= 0.1


def test_estimate_w1_shifted_uniforms():
    rng = np.random.default_rng(0)
    w = estimate_w1(rng.uniform(1, 2, 400), rng.uniform(0, 1, 400),
                    critic_steps=800, seed=1)
    assert 0.8 <= w <= 1.1


def test_estimate_w1_shifted_gaussians():
    rng = np.random.default_rng(0)
    a, b = rng.normal(2, 1, 1000), rng.normal(0, 1, 1000)
    w = estimate_w1(a, b, critic_steps=1500, seed=1)
    assert w == pytest.approx(2.0, abs=0.2)
    # the retrained swap agrees in magnitude within 10 percent
    back = estimate_w1(b, a, critic_steps=1500, seed=1)
    assert abs(abs(back) - abs(w)) <= 0.1 * abs(w)


def test_estimate_w1_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension"):
        estimate_w1(np.zeros((5, 2)), np.zeros((5, 3)))


# ---------------------------------------------------------------- persistence


def test_fccn_model_save_load(tmp_path):
    from ccnlab.ccn import load_model, save_model
    data = toy_dataset(n=200, seed=2)
    tc = TrainConfig(epochs=5, batch_size=64, z_draws=3, hidden=(8,), seed=1)
    fc = FccnConfig(alpha=1e-4, beta=5e-3, q_w=4, q_a=4, phi_hidden=(8,),
                    critic_hidden=(8, 4), critic_steps=2)
    model = train_fccn(data, tc, fc)
    save_model(model, tmp_path / "m")
    back = load_model(tmp_path / "m")
    assert back.heads is not None
    probe = np.random.default_rng(3).normal(size=(10, 3))
    np.testing.assert_array_equal(back.heads.represent(probe),
                                  model.heads.represent(probe))
    np.testing.assert_array_equal(back.cdf_values(probe, 1, np.zeros(10)),
                                  model.cdf_values(probe, 1, np.zeros(10)))
