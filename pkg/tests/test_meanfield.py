import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from deepmf.ensembles import DeepNetConfig, InputEnsembleConfig, LayerWeights, sample_deep_net, sample_input_covariance
from deepmf.errors import InvalidArgument, NumericalDomainError
from deepmf.meanfield import LayerMoments, preactivation_stats, propagate_chain, propagate_moments
from deepmf.numerics import RngStream, expect_2d_correlated, default_rule, trapezoid_rule

from conftest import random_psd


def small_instance(seed, n=5, g=0.8, sigma_b=0.1):
    gen = np.random.default_rng(seed)
    w = gen.normal(size=(n, n)) * np.sqrt(g / n)
    b = gen.normal(size=n) * np.sqrt(sigma_b)
    c = random_psd(gen, n) * 0.5
    m = gen.uniform(-0.3, 0.3, n)
    return LayerWeights(w, b), LayerMoments(m, c)


def test_preactivation_zero_cov():
    lw, prev = small_instance(0)
    st_ = preactivation_stats(lw, LayerMoments(prev.mean, np.zeros((5, 5))))
    np.testing.assert_array_equal(st_.delta, 0.0)
    np.testing.assert_allclose(st_.x0, lw.w @ prev.mean + lw.b)


def test_preactivation_identity_weights():
    _, prev = small_instance(1)
    st_ = preactivation_stats(LayerWeights(np.eye(5), np.zeros(5)), prev)
    np.testing.assert_allclose(st_.delta, prev.cov, atol=1e-15)


def test_preactivation_dimension_mismatch():
    lw, _ = small_instance(0)
    with pytest.raises(InvalidArgument):
        preactivation_stats(lw, LayerMoments.centered(np.eye(4)))


def test_preactivation_matches_sampling():
    lw, prev = small_instance(2)
    delta = preactivation_stats(lw, prev).delta
    gen = np.random.default_rng(3)
    s = 10**6
    h = gen.multivariate_normal(prev.mean, prev.cov, size=s)
    a = (h - prev.mean) @ lw.w.T
    emp = a.T @ a / s
    se = np.sqrt((np.outer(np.diag(delta), np.diag(delta)) + delta**2) / s)
    assert np.all(np.abs(emp - delta) < 3.5 * se)


def test_preactivation_psd_and_psi():
    lw, prev = small_instance(4)
    st_ = preactivation_stats(lw, prev)
    assert np.linalg.eigvalsh(st_.delta).min() > -1e-12
    assert np.all(np.abs(st_.psi) <= 1.0)
    np.testing.assert_allclose(np.diag(st_.psi), 1.0)


def test_zero_network_gives_zero_moments():
    prev = LayerMoments.centered(np.eye(4))
    out = propagate_moments(LayerWeights(np.zeros((4, 4)), np.zeros(4)), prev)
    np.testing.assert_array_equal(out.mean, 0.0)
    np.testing.assert_array_equal(out.cov, 0.0)


def test_deterministic_preactivations():
    lw, prev = small_instance(5)
    out = propagate_moments(lw, LayerMoments(prev.mean, np.zeros((5, 5))))
    np.testing.assert_allclose(out.mean, np.tanh(lw.w @ prev.mean + lw.b), atol=1e-15)
    np.testing.assert_array_equal(out.cov, 0.0)


def test_negative_variance_rejected():
    c = -np.eye(3) * 1e-6
    with pytest.raises(NumericalDomainError):
        propagate_moments(LayerWeights(np.eye(3), np.zeros(3)), LayerMoments.centered(c))


def test_matches_pairwise_quadrature():
    lw, prev = small_instance(6)
    out = propagate_moments(lw, prev)
    st_ = preactivation_stats(lw, prev)
    s, x0, psi = st_.std, st_.x0, st_.psi
    rule = default_rule()
    for i in range(5):
        for j in range(5):
            f = lambda u, v: np.tanh(s[i] * u + x0[i]) * np.tanh(s[j] * v + x0[j])
            ref = expect_2d_correlated(f, psi[i, j], rule) - out.mean[i] * out.mean[j]
            assert out.cov[i, j] == pytest.approx(ref, abs=1e-13)


def test_matches_monte_carlo_n3():
    lw, prev = small_instance(7, n=3)
    out = propagate_moments(lw, prev)
    gen = np.random.default_rng(8)
    chol = np.linalg.cholesky(prev.cov)
    s1 = np.zeros(3)
    s2 = np.zeros((3, 3))
    n = 0
    for _ in range(10):
        v = prev.mean + gen.normal(size=(10**6, 3)) @ chol.T
        h = np.tanh(v @ lw.w.T + lw.b)
        s1 += h.sum(0)
        s2 += h.T @ h
        n += h.shape[0]
    mean = s1 / n
    cov = s2 / n - np.outer(mean, mean)
    d = np.diag(cov)
    assert np.all(np.abs(mean - out.mean) < 3 * np.sqrt(d / n))
    se = np.sqrt((np.outer(d, d) + cov**2) / n)
    assert np.all(np.abs(cov - out.cov) < 3 * se)


def test_uncorrelated_preactivations_decouple():
    w = np.diag([0.9, 1.1, 0.7])
    prev = LayerMoments(np.array([0.1, -0.2, 0.3]), np.diag([0.5, 0.8, 1.0]))
    out = propagate_moments(LayerWeights(w, np.array([0.2, 0.0, -0.1])), prev)
    off = out.cov - np.diag(np.diag(out.cov))
    assert np.max(np.abs(off)) < 1e-10


def test_perfectly_correlated_units():
    w = np.ones((2, 2)) * 0.7
    out = propagate_moments(LayerWeights(w, np.zeros(2)), LayerMoments.centered(np.eye(2)))
    assert out.cov[0, 1] == pytest.approx(out.cov[0, 0], abs=1e-14)


@settings(deadline=None, max_examples=20)
@given(st.integers(0, 10**6), st.integers(2, 8))
def test_output_invariants(seed, n):
    lw, prev = small_instance(seed, n=n)
    out = propagate_moments(lw, prev)
    assert np.array_equal(out.cov, out.cov.T)
    assert np.all(np.abs(out.mean) <= 1.0)
    d = np.diag(out.cov)
    assert np.all(d >= 0) and np.all(d <= 1.0 - out.mean**2 + 1e-12)
    assert np.linalg.eigvalsh(out.cov).min() > -1e-10


def test_chain_composition():
    lw1, prev = small_instance(9)
    lw2, _ = small_instance(10)
    assert propagate_chain([], prev)[0] is prev
    chain = propagate_chain([lw1, lw2], prev)
    assert len(chain) == 3
    manual = propagate_moments(lw2, propagate_moments(lw1, prev))
    np.testing.assert_array_equal(chain[2].cov, manual.cov)
    np.testing.assert_array_equal(chain[2].mean, manual.mean)


def test_order_doubling_fig2_regime():
    rng = RngStream(11)
    net = sample_deep_net(DeepNetConfig(40, 3), rng)
    c0 = sample_input_covariance(InputEnsembleConfig(40), rng)
    a = propagate_chain(net, LayerMoments.centered(c0), trapezoid_rule(81))
    b = propagate_chain(net, LayerMoments.centered(c0), trapezoid_rule(161))
    for x, y in zip(a, b):
        assert np.max(np.abs(x.cov - y.cov)) < 1e-9
        assert np.max(np.abs(x.mean - y.mean)) < 1e-9
