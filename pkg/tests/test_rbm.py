import numpy as np
import pytest

from deepmf.errors import InvalidArgument
from deepmf.numerics import RngStream
from deepmf.rbm import (
    RbmModel,
    TrainConfig,
    all_spin_configs,
    cd1_gradients,
    cd1_update,
    exact_moments,
    gibbs_generate,
    hidden_conditional,
    mean_activity,
    random_rbm,
    reconstruction_error,
    train_dbn,
    train_rbm,
    visible_conditional,
    visible_distribution,
)


def joint_table(model):
    v = all_spin_configs(model.n_visible)
    s = all_spin_configs(model.n_hidden)
    e = (v @ model.w) @ s.T + (v @ model.bv)[:, None] + (s @ model.bh)[None, :]
    p = np.exp(e - e.max())
    return v, s, p / p.sum()


def test_conditional_limits():
    m = RbmModel(np.zeros((2, 3)), np.zeros(2), np.zeros(3))
    np.testing.assert_array_equal(hidden_conditional(m, np.ones(2)), 0.5)
    sat = RbmModel(np.zeros((1, 1)), np.zeros(1), np.array([50.0]))
    assert abs(hidden_conditional(sat, np.ones(1))[0] - 1.0) < 1e-15


def test_conditionals_match_enumeration():
    model = random_rbm(4, 4, 2.0, 0.5, RngStream(0))
    v, s, p = joint_table(model)
    for k in range(v.shape[0]):
        ps = p[k] / p[k].sum()
        up = ps @ (s > 0)
        np.testing.assert_allclose(hidden_conditional(model, v[k]), up, atol=1e-12)
    for k in range(s.shape[0]):
        pv = p[:, k] / p[:, k].sum()
        np.testing.assert_allclose(visible_conditional(model, s[k]), pv @ (v > 0), atol=1e-12)


def test_visible_marginal_matches_joint():
    model = random_rbm(4, 3, 1.0, 0.2, RngStream(1))
    _, _, p = joint_table(model)
    _, pv = visible_distribution(model)
    np.testing.assert_allclose(pv, p.sum(axis=1), atol=1e-14)
    assert abs(pv.sum() - 1.0) < 1e-12


def test_gibbs_independent_spins():
    s = 20000
    zero = RbmModel.zeros(5, 3)
    x = gibbs_generate(zero, s, RngStream(2), burn_in=10, thinning=1)
    assert set(np.unique(x)) <= {-1.0, 1.0}
    assert np.all(np.abs(x.mean(0)) < 3 / np.sqrt(s))
    biased = RbmModel(np.zeros((5, 3)), np.full(5, 0.5), np.zeros(3))
    x = gibbs_generate(biased, s, RngStream(3), burn_in=10, thinning=1)
    se = np.sqrt((1 - np.tanh(0.5) ** 2) / s)
    assert np.all(np.abs(x.mean(0) - np.tanh(0.5)) < 3 * se)


def test_gibbs_matches_enumeration_n8():
    model = random_rbm(8, 8, 0.8, 0.1, RngStream(4))
    mean, cov = exact_moments(model)
    s = 200_000
    chain = 10_000
    x = gibbs_generate(model, s, RngStream(5), chain_length=chain)
    # chains are independent, so per-chain estimates give honest errors
    per = x.reshape(s // chain, chain, 8)
    means = per.mean(axis=1)
    covs = np.array([np.cov(c.T) for c in per])
    k = per.shape[0]
    se_m = means.std(axis=0, ddof=1) / np.sqrt(k)
    se_c = covs.std(axis=0, ddof=1) / np.sqrt(k)
    assert np.all(np.abs(means.mean(0) - mean) < 3 * se_m)
    iu = np.triu_indices(8, k=1)
    assert np.all(np.abs(covs.mean(0) - cov)[iu] < 3 * se_c[iu])


def test_gibbs_reproducible():
    model = random_rbm(6, 4, 0.8, 0.1, RngStream(6))
    a = gibbs_generate(model, 50, RngStream(7), burn_in=5)
    b = gibbs_generate(model, 50, RngStream(7), burn_in=5)
    np.testing.assert_array_equal(a, b)


def test_cd1_zero_lr_and_zero_model():
    model = random_rbm(6, 4, 0.8, 0.1, RngStream(8))
    batch = np.where(np.random.default_rng(0).random((30, 6)) < 0.5, 1.0, -1.0)
    cfg = TrainConfig(weight_decay=0.0)
    same = cd1_update(model, batch, cfg, np.random.default_rng(1), lr=0.0)
    np.testing.assert_array_equal(same.w, model.w)
    np.testing.assert_array_equal(same.bv, model.bv)
    sym = np.concatenate([batch, -batch])
    dw, dbv, _ = cd1_gradients(RbmModel.zeros(6, 4), sym, np.random.default_rng(2))
    np.testing.assert_allclose(dw, 0.0, atol=1e-15)
    np.testing.assert_allclose(dbv, 0.0, atol=1e-15)


def test_weight_decay_only_on_weights():
    model = RbmModel(np.ones((2, 2)), np.ones(2), np.ones(2))
    grads = (np.zeros((2, 2)), np.zeros(2), np.zeros(2))
    from deepmf.rbm import apply_update

    out = apply_update(model, grads, 0.1, 0.5)
    np.testing.assert_allclose(out.w, 0.95)
    np.testing.assert_array_equal(out.bv, 1.0)


def test_learning_rate_schedule():
    cfg = TrainConfig()
    assert [cfg.learning_rate(t) for t in (1, 10, 11, 20, 21)] == [0.12, 0.12, 0.06, 0.06, 0.04]


def test_dataset_smaller_than_batch_rejected():
    with pytest.raises(InvalidArgument):
        TrainConfig(batch_size=150).validate_dataset(100)
    with pytest.raises(InvalidArgument):
        train_rbm(np.ones((100, 4)), 3, TrainConfig(), RngStream(0))


def test_training_reduces_reconstruction_error_n20():
    gen_model = random_rbm(20, 20, 0.8, 0.1, RngStream(9))
    data = gibbs_generate(gen_model, 5000, RngStream(10))
    model, log = train_rbm(data, 20, TrainConfig(max_epochs=30), RngStream(11))
    assert log.errors[-1] < log.initial_error
    assert all(e >= 0 for e in log.errors)
    assert log.epochs <= 30


def test_dbn_depth1_equals_single_rbm():
    data = gibbs_generate(random_rbm(8, 8, 0.8, 0.1, RngStream(12)), 600, RngStream(13), burn_in=50)
    cfg = TrainConfig(max_epochs=3)
    models, logs = train_dbn([6], data, cfg, RngStream(14))
    single, slog = train_rbm(data, 6, cfg, RngStream(14).child(0))
    np.testing.assert_array_equal(models[0].w, single.w)
    assert logs[0].errors == slog.errors


def test_dbn_feeds_mean_activity():
    data = gibbs_generate(random_rbm(8, 8, 0.8, 0.1, RngStream(15)), 600, RngStream(16), burn_in=50)
    cfg = TrainConfig(max_epochs=2)
    models, _ = train_dbn([6, 5], data, cfg, RngStream(17))
    second, _ = train_rbm(mean_activity(models[0], data), 5, cfg, RngStream(17).child(1))
    np.testing.assert_array_equal(models[1].w, second.w)
    assert models[1].w.shape == (6, 5)


def test_exact_moments_independent_spins():
    bv = np.array([0.3, -0.7, 0.0])
    mean, cov = exact_moments(RbmModel(np.zeros((3, 2)), bv, np.array([0.4, 0.1])))
    np.testing.assert_allclose(mean, np.tanh(bv), atol=1e-14)
    np.testing.assert_allclose(cov, np.diag(1 - np.tanh(bv) ** 2), atol=1e-14)


def test_exact_moments_hand_table():
    w = np.array([[0.7], [-0.4]])
    bv = np.array([0.2, -0.1])
    bh = np.array([0.3])
    rows = []
    for v1 in (-1, 1):
        for v2 in (-1, 1):
            weight = np.exp(bv[0] * v1 + bv[1] * v2) * 2 * np.cosh(bh[0] + w[0, 0] * v1 + w[1, 0] * v2)
            rows.append((v1, v2, weight))
    z = sum(r[2] for r in rows)
    m1 = sum(r[0] * r[2] for r in rows) / z
    m2 = sum(r[1] * r[2] for r in rows) / z
    c12 = sum(r[0] * r[1] * r[2] for r in rows) / z - m1 * m2
    mean, cov = exact_moments(RbmModel(w, bv, bh))
    np.testing.assert_allclose(mean, [m1, m2], atol=1e-14)
    assert cov[0, 1] == pytest.approx(c12, abs=1e-14)
    assert cov[0, 0] == pytest.approx(1 - m1 * m1, abs=1e-14)


def test_enumeration_guard():
    with pytest.raises(InvalidArgument):
        exact_moments(RbmModel.zeros(21, 1))


def test_reconstruction_error_examples():
    zero = RbmModel.zeros(4, 3)
    assert reconstruction_error(zero, np.zeros((5, 4))) == 0.0
    assert reconstruction_error(zero, np.ones((5, 4))) == pytest.approx(4.0)
    # 1 x 1 model: v -> tanh(w v) -> tanh(w tanh(w v))
    w = 3.0
    m = RbmModel(np.array([[w]]), np.zeros(1), np.zeros(1))
    expect = (np.tanh(w * np.tanh(w)) - 1.0) ** 2
    assert reconstruction_error(m, np.array([[1.0]])) == pytest.approx(expect, rel=1e-12)
