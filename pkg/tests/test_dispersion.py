import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import ordering_pair, max_rel_err, mp_central_derivatives, mp_neg_g, mp_neg_u, random_simplex, simplex_points
from fgp.dispersion import (
    ces_value, check_convexity, log_ces_value, check_dispersion_ordering, custom, geometric_mean, neg_ces,
    neg_geometric_mean, tangent_projection,
)
from fgp.errors import ConfigError, DomainError, NumericError, PreconditionError

GAMMAS = (-2.0, -0.5, 0.5, 2.0)
CONCAVE_GAMMAS = (-2.0, -0.5, 0.5)


def test_geometric_mean_examples():
    assert geometric_mean([0.5, 0.5]) == pytest.approx(0.5, abs=1e-15)
    assert geometric_mean([1 / 3] * 3) == pytest.approx(1 / 3, abs=1e-15)
    # sqrt(0.24) from 30-digit arithmetic
    assert geometric_mean([0.6, 0.4]) == pytest.approx(0.489897948556635619639, abs=1e-6)


def test_geometric_mean_domain():
    with pytest.raises(DomainError):
        geometric_mean([0.5, 0.0, 0.5])
    with pytest.raises(DomainError):
        geometric_mean([1.2, -0.2])


def test_ces_examples(rng):
    for _ in range(20):
        t = random_simplex(rng, rng.integers(2, 12))
        assert ces_value(t, 1.0) == pytest.approx(1.0, abs=1e-15)
    assert ces_value([0.5, 0.5], -0.5) == pytest.approx(0.125, abs=1e-15)
    for n in (2, 3, 7):
        for g in GAMMAS:
            assert ces_value(np.full(n, 1 / n), g) == pytest.approx(n ** ((1 - g) / g), rel=1e-13)


def test_ces_gamma_validation():
    with pytest.raises(ConfigError):
        ces_value([0.5, 0.5], 0.0)
    with pytest.raises(ConfigError):
        neg_ces(11.0)


def test_ces_log_space_survives_large_n_and_gamma():
    t = np.full(5000, 1 / 5000)
    assert np.isfinite(ces_value(t, -10.0))
    assert np.isfinite(ces_value(t, 10.0))


@pytest.mark.parametrize("gamma", [1e-6, -1e-6])
def test_ces_near_zero_gamma_finite_in_log_space_and_symmetric(gamma, rng):
    t = random_simplex(rng, 6)
    v = log_ces_value(t, gamma)
    assert np.isfinite(v)
    # log U ~ log(N)/gamma + mean(log theta)
    assert v == pytest.approx(np.log(6) / gamma + np.log(t).mean(), rel=1e-6)
    assert log_ces_value(rng.permutation(t), gamma) == pytest.approx(v, rel=1e-12)
    with pytest.raises(NumericError):
        ces_value(t, gamma)


def test_gradient_examples():
    np.testing.assert_allclose(neg_geometric_mean().gradient([0.5, 0.5]), [-0.5, -0.5], atol=1e-15)
    np.testing.assert_array_equal(neg_ces(1.0).hessian([0.3, 0.7]), np.zeros((2, 2)))


@pytest.mark.parametrize("measure", [neg_geometric_mean()] + [neg_ces(g) for g in GAMMAS], ids=lambda m: m.name)
def test_analytic_derivatives_match_high_precision_differences(measure, rng):
    f = mp_neg_g if measure.kind == "neg_geometric_mean" else mp_neg_u(measure.gamma)
    for _ in range(10):
        t = random_simplex(rng, rng.integers(2, 6))
        g_ref, h_ref = mp_central_derivatives(f, t)
        assert max_rel_err(measure.gradient(t), g_ref) < 1e-6
        assert max_rel_err(measure.hessian(t), h_ref) < 1e-6


def test_vectorized_evaluation_matches_rows(rng):
    theta = np.stack([random_simplex(rng, 4) for _ in range(7)])
    for m in (neg_geometric_mean(), neg_ces(-0.5)):
        np.testing.assert_allclose(m.value(theta), [m.value(t) for t in theta], rtol=1e-15)
        np.testing.assert_allclose(m.gradient(theta), [m.gradient(t) for t in theta], rtol=1e-15)
        np.testing.assert_allclose(m.hessian(theta), [m.hessian(t) for t in theta], rtol=1e-15)


def test_custom_measure_gradient_matches_projected_analytic(rng):
    ref = neg_geometric_mean()
    fd = custom(lambda t: -np.prod(t) ** (1 / len(t)), "neg_g_naive")
    for _ in range(100):
        t = random_simplex(rng, rng.integers(2, 8), concentration=3.0)
        p = tangent_projection(t.size)
        assert max_rel_err(fd.gradient(t), p @ ref.gradient(t)) < 1e-6


def test_custom_measure_hessian_matches_on_tangent_space(rng):
    ref = neg_ces(-0.5)
    fd = custom(lambda t: -np.sum(t ** -0.5) ** -2.0)
    for _ in range(10):
        t = random_simplex(rng, 4, concentration=5.0)
        p = tangent_projection(4)
        assert max_rel_err(fd.hessian(t), p @ ref.hessian(t) @ p) < 1e-4


def test_custom_weights_equal_builtin_weights(rng):
    from fgp.portfolio import generated_weights
    fd = custom(lambda t: -np.prod(t) ** (1 / len(t)))
    for _ in range(5):
        t = random_simplex(rng, 5, concentration=3.0)
        np.testing.assert_allclose(generated_weights(fd, t), np.full(5, 0.2), atol=1e-8)


@settings(max_examples=200, deadline=None)
@given(theta=simplex_points(), perm_seed=st.integers(0, 2**32 - 1), gamma=st.sampled_from(GAMMAS))
def test_permutation_symmetry(theta, perm_seed, gamma):
    perm = np.random.default_rng(perm_seed).permutation(theta.size)
    for m in (neg_geometric_mean(), neg_ces(gamma)):
        assert m.value(theta[perm]) == pytest.approx(m.value(theta), rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(theta=simplex_points(), gamma=st.sampled_from(CONCAVE_GAMMAS), vseed=st.integers(0, 2**32 - 1))
def test_convexity_on_tangent_space(theta, gamma, vseed):
    rng = np.random.default_rng(vseed)
    v = rng.standard_normal((10, theta.size))
    v -= v.mean(axis=1, keepdims=True)
    for m in (neg_geometric_mean(), neg_ces(gamma)):
        h = m.hessian(theta)
        scale = np.abs(h).max()
        q = 0.5 * np.einsum("ki,ij,kj->k", v, h, v)
        assert q.min() >= -1e-10 * max(scale, 1.0)


def test_neg_ces_with_gamma_above_one_is_not_convex():
    t = np.array([0.2, 0.3, 0.5])
    with pytest.warns(RuntimeWarning, match="not convex"):
        check_convexity(neg_ces(2.0), t, rng=0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert check_convexity(neg_geometric_mean(), t, rng=0) >= 0


def test_ordering_examples():
    r = check_dispersion_ordering(neg_geometric_mean(), [0.7, 0.1, 0.2], [0.5, 0.3, 0.2])
    assert r.holds and r.strict
    # 30-digit values: -0.241014..., -0.310723...
    assert r.f_theta == pytest.approx(-0.241014226417523, abs=1e-12)
    assert r.f_theta_prime == pytest.approx(-0.310723250595386, abs=1e-12)
    r = check_dispersion_ordering(neg_ces(-0.5), [0.6, 0.4], [0.55, 0.45])
    assert r.holds
    assert r.f_theta == pytest.approx(-0.121224617320373, abs=1e-12)
    with pytest.raises(PreconditionError):
        check_dispersion_ordering(neg_geometric_mean(), [0.2, 0.3, 0.5], [0.5, 0.3, 0.2])


def test_ordering_precondition_needs_n_minus_2_equal():
    with pytest.raises(PreconditionError):
        check_dispersion_ordering(neg_geometric_mean(), [0.6, 0.1, 0.1, 0.2], [0.4, 0.2, 0.15, 0.25])


@pytest.mark.parametrize("measure", [neg_geometric_mean(), neg_ces(-0.5), neg_ces(0.5)], ids=lambda m: m.name)
def test_ordering_on_random_pairs(measure, rng):
    for n, _ in zip(itertools.cycle(range(2, 12)), range(1000)):
        t, tp = ordering_pair(rng, n)
        r = check_dispersion_ordering(measure, t, tp)
        assert r.holds
        if measure.kind == "neg_geometric_mean":
            assert r.strict
