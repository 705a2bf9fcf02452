import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import multivariate_normal, norm

from conftest import gaussian_params
from sgame import (
    BoundsViolationError,
    Dataset,
    ExpertParams,
    GatingParams,
    ParameterBounds,
    SgameParams,
    check_in_class,
    gradient_envelope,
    log_density,
    log_density_gradient,
    penalty,
    project_to_bounds,
    random_params,
    sample,
    softmax_gates,
)
from sgame.divergence import integrate_density_1d
from sgame.model import bound_violations, conditional_mean, flat_layout, flatten_params, unflatten_params
from sgame.verify import finite_difference_gradient, gradient_fd_error


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


def test_gate_constants_are_consistent():
    b = ParameterBounds(0.7, 1.0, 0.5, 2.0, 3)
    assert b.a_g_min == pytest.approx(math.exp(-0.7) / (3 * math.exp(0.7)))
    assert b.a_g_max == pytest.approx(math.exp(0.7) / (3 * math.exp(-0.7)))
    assert b.a_g_min <= 1 / 3 <= b.a_g_max


@pytest.mark.parametrize("kwargs", [
    dict(a_gamma_sup=-1, a_beta_sup=1, a_sigma_min=1, a_sigma_max=2, k=1),
    dict(a_gamma_sup=1, a_beta_sup=1, a_sigma_min=0, a_sigma_max=2, k=1),
    dict(a_gamma_sup=1, a_beta_sup=1, a_sigma_min=3, a_sigma_max=2, k=1),
    dict(a_gamma_sup=1, a_beta_sup=1, a_sigma_min=1, a_sigma_max=2, k=0),
])
def test_bounds_validation(kwargs):
    with pytest.raises(ValueError):
        ParameterBounds(**kwargs)


def test_params_shape_mismatch_rejected():
    b = ParameterBounds(1, 1, 1, 1, 2)
    with pytest.raises(ValueError):
        SgameParams(GatingParams(np.zeros(2), np.zeros((2, 3))),
                    ExpertParams(np.zeros((2, 1)), np.zeros((2, 1, 4)), np.ones((2, 1, 1))), b)
    with pytest.raises(ValueError):
        SgameParams(GatingParams(np.zeros(3), np.zeros((3, 3))),
                    ExpertParams(np.zeros((2, 1)), np.zeros((2, 1, 3)), np.ones((2, 1, 1))), b)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[1.5]]), np.array([[0.0]]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((0, 2)), np.zeros((0, 1)))
    d = Dataset(np.zeros((3, 2)), np.arange(3.0))
    assert d.responses.shape == (3, 1)
    assert (d.n, d.p, d.q) == (3, 2, 1)


def test_params_are_immutable():
    psi = gaussian_params([0.0, 1.0], [1.0, 1.0])
    with pytest.raises(ValueError):
        psi.gating.intercepts[0] = 3.0


def test_params_dict_round_trip_is_lossless(rng, wide_bounds):
    psi = random_params(wide_bounds, 4, 2, rng)
    back = SgameParams.from_dict(psi.to_dict())
    np.testing.assert_array_equal(flatten_params(back), flatten_params(psi))
    assert back.bounds == psi.bounds


# ---------------------------------------------------------------------------
# gates
# ---------------------------------------------------------------------------


def test_zero_gating_is_uniform():
    g = GatingParams.zeros(3, 4)
    np.testing.assert_allclose(softmax_gates(g, np.full(4, 0.3)), np.full(3, 1 / 3), rtol=0, atol=1e-15)


def test_softmax_two_components():
    g = GatingParams(np.array([0.0, math.log(3.0)]), np.zeros((2, 1)))
    np.testing.assert_allclose(softmax_gates(g, [0.5]), [0.25, 0.75], rtol=1e-14)


def test_softmax_is_stable_for_large_scores():
    g = GatingParams(np.array([1000.0, 0.0]), np.zeros((2, 1)))
    out = softmax_gates(g, [0.0])
    assert np.all(np.isfinite(out)) and out[0] == 1.0


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 5), p=st.integers(1, 6),
       a_gamma=st.floats(0.0, 3.0))
def test_gates_in_simplex_and_within_gate_constants(seed, k, p, a_gamma):
    rng = np.random.default_rng(seed)
    b = ParameterBounds(a_gamma, 1.0, 0.5, 2.0, k)
    psi = random_params(b, p, 1, rng)
    x = rng.random((20, p))
    g = softmax_gates(psi.gating, x)
    np.testing.assert_allclose(g.sum(axis=1), 1.0, rtol=0, atol=1e-12)
    assert np.all(g > 0)
    assert np.all(g >= b.a_g_min * (1 - 1e-12)) and np.all(g <= b.a_g_max * (1 + 1e-12))


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------


def test_standard_normal_at_mode():
    psi = gaussian_params([0.0], [1.0])
    assert log_density(psi, [0.3], [0.0]) == pytest.approx(-0.5 * math.log(2 * math.pi), rel=1e-14)


def test_identical_experts_collapse(rng):
    b = ParameterBounds(2.0, 3.0, 0.5, 4.0, 2)
    one = random_params(b.with_k(1), 3, 2, rng)
    two = SgameParams(
        GatingParams(np.array([0.4, -0.9]), rng.uniform(-0.5, 0.5, (2, 3))),
        ExpertParams(np.repeat(one.experts.intercepts, 2, 0), np.repeat(one.experts.slopes, 2, 0),
                     np.repeat(one.experts.covariances, 2, 0)),
        b,
    )
    x, y = rng.random((10, 3)), rng.standard_normal((10, 2))
    np.testing.assert_allclose(log_density(two, x, y), log_density(one, x, y), rtol=1e-12)


def test_log_density_matches_scipy_mixture(rng, wide_bounds):
    psi = random_params(wide_bounds, 3, 2, rng)
    x, y = rng.random(3), rng.standard_normal(2)
    g = softmax_gates(psi.gating, x)
    ref = sum(g[k] * multivariate_normal(psi.experts.intercepts[k] + psi.experts.slopes[k] @ x,
                                         psi.experts.covariances[k]).pdf(y) for k in range(2))
    assert log_density(psi, x, y) == pytest.approx(math.log(ref), rel=1e-12)


def test_log_density_rejects_non_pd_covariance():
    from sgame import NotPositiveDefiniteError

    psi = gaussian_params([0.0], [-1.0])
    with pytest.raises(NotPositiveDefiniteError):
        log_density(psi, [0.0], [0.0])


def test_density_integrates_to_one_scipy_oracle(rng):
    b = ParameterBounds(1.5, 2.0, 0.5, 4.0, 3)
    for _ in range(5):
        psi = random_params(b, 2, 1, rng)
        x = rng.random(2)
        val, _ = quad(lambda t: math.exp(log_density(psi, x, [t])), -np.inf, np.inf, epsabs=1e-12)
        assert val == pytest.approx(1.0, abs=1e-8)
        assert integrate_density_1d(psi, x) == pytest.approx(1.0, abs=1e-9)


def test_conditional_mean(rng, wide_bounds):
    psi = random_params(wide_bounds, 2, 1, rng)
    x = rng.random(2)
    g = softmax_gates(psi.gating, x)
    means = psi.experts.intercepts[:, 0] + psi.experts.slopes[:, 0] @ x
    assert conditional_mean(psi, x)[0] == pytest.approx(g @ means, rel=1e-14)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sample_zero_mean_gaussian():
    psi = gaussian_params([0.0], [1.0])
    y = sample(psi, [0.5], np.random.default_rng(0), size=100_000)
    assert abs(y.mean()) < 0.02


def test_sample_degenerate_gate_picks_first_expert():
    psi = gaussian_params([-2.0, 2.0], [1.0, 1.0], gate_intercepts=[800.0, 0.0],
                          bounds=ParameterBounds(1000, 10, 0.01, 100, 2))
    _, comp = sample(psi, [0.5], np.random.default_rng(1), size=5000, return_components=True)
    assert np.all(comp == 0)


def test_sample_histogram_matches_density():
    psi = gaussian_params([-2.0, 2.0], [1.0, 1.0])
    n = 200_000
    y = sample(psi, [0.0], np.random.default_rng(2), size=n)[:, 0]
    edges = np.linspace(-5, 5, 41)
    counts, _ = np.histogram(y, edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    width = edges[1] - edges[0]
    # bin probabilities from the exact mixture cdf
    cdf = 0.5 * (norm.cdf(edges, -2, 1) + norm.cdf(edges, 2, 1))
    prob = np.diff(cdf)
    se = np.sqrt(prob * (1 - prob) / n)
    assert np.all(np.abs(counts / n - prob) <= 5 * se + 1e-12)
    # and the density itself agrees with the bin average to first order
    dens = np.exp(log_density(psi, np.zeros((40, 1)), mids[:, None]))
    np.testing.assert_allclose(prob / width, dens, atol=2e-3)


def test_sample_is_deterministic(wide_bounds):
    psi = random_params(wide_bounds, 3, 2, np.random.default_rng(3))
    x = np.random.default_rng(4).random((7, 3))
    np.testing.assert_array_equal(sample(psi, x, 11), sample(psi, x, 11))


def test_multivariate_sample_covariance(rng):
    b = ParameterBounds(1.0, 1.0, 0.5, 2.0, 1)
    psi = random_params(b, 2, 3, rng)
    y = sample(psi, [0.2, 0.7], np.random.default_rng(9), size=200_000)
    np.testing.assert_allclose(np.cov(y.T), psi.experts.covariances[0], atol=0.03)


# ---------------------------------------------------------------------------
# gradient
# ---------------------------------------------------------------------------


def test_single_expert_gating_gradient_is_zero(rng):
    b = ParameterBounds(1.0, 2.0, 0.5, 2.0, 1)
    psi = random_params(b, 4, 2, rng)
    g = log_density_gradient(psi, rng.random(4), rng.standard_normal(2))
    lay = flat_layout(1, 4, 2)
    assert np.all(g[lay["gating_intercepts"]] == 0) and np.all(g[lay["gating_slopes"]] == 0)


def test_single_gaussian_gradient_closed_form():
    # d/dmu ln N(y; mu, s2) = (y - mu)/s2 ; d/ds2 = ((y-mu)^2/s2 - 1)/(2 s2)
    psi = gaussian_params([0.5], [2.0])
    g = log_density_gradient(psi, np.array([0.0]), np.array([1.5]))
    lay = flat_layout(1, 1, 1)
    assert g[lay["expert_intercepts"]][0] == pytest.approx(0.5, rel=1e-14)
    assert g[lay["covariances"]][0] == pytest.approx((1.0 / 2.0 - 1.0) / 4.0, rel=1e-14)


@pytest.mark.parametrize("q,k,p", [(1, 2, 5), (2, 3, 4), (3, 2, 2)])
def test_gradient_matches_finite_differences(q, k, p):
    rng = np.random.default_rng(100 + q)
    b = ParameterBounds(2.0, 3.0, 0.5, 4.0, k)
    for _ in range(50):
        psi = random_params(b, p, q, rng)
        x, y = rng.random(p), rng.uniform(-6, 6, q)
        assert gradient_fd_error(psi, x, y) <= 1e-5


def test_fd_oracle_does_not_symmetrize_covariance(rng):
    # perturbing one off-diagonal entry changes the density only through that entry
    b = ParameterBounds(1.0, 1.0, 0.5, 2.0, 1)
    psi = random_params(b, 1, 2, rng)
    fd = finite_difference_gradient(psi, [0.3], [0.4, -0.2])
    lay = flat_layout(1, 1, 2)
    cov_block = fd[lay["covariances"]].reshape(2, 2)
    np.testing.assert_allclose(cov_block, cov_block.T, atol=1e-8)


def test_gradient_envelope_hand_values():
    b = ParameterBounds(0.0, 1.0, 1.0, 1.0, 2)
    assert gradient_envelope(1.0, b, 1) == pytest.approx(10.0, rel=1e-15)
    assert gradient_envelope(1.0, b, 4) == pytest.approx(66.0, rel=1e-15)
    assert gradient_envelope(0.0, b, 1) < gradient_envelope(1.0, b, 1)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), q=st.integers(1, 3), k=st.integers(1, 4), p=st.integers(1, 6))
def test_gradient_within_envelope(seed, q, k, p):
    rng = np.random.default_rng(seed)
    b = ParameterBounds(rng.uniform(0, 2), rng.uniform(0, 3), 0.5, 4.0, k)
    psi = random_params(b, p, q, rng)
    x, y = rng.random(p), rng.uniform(-8, 8, q)
    g = log_density_gradient(psi, x, y)
    assert np.abs(g).max() <= gradient_envelope(float(np.abs(y).max()), b, q)


# ---------------------------------------------------------------------------
# projection and penalty
# ---------------------------------------------------------------------------


def test_feasible_projection_is_identity(rng, wide_bounds):
    psi = random_params(wide_bounds, 3, 2, rng)
    assert project_to_bounds(psi) is psi


def test_covariance_clipped_to_upper_cap():
    b = ParameterBounds(1.0, 1.0, 0.5, 2.0, 1)
    psi = SgameParams(GatingParams.zeros(1, 1),
                      ExpertParams(np.zeros((1, 2)), np.zeros((1, 2, 1)), np.diag([10.0, 10.0])[None]), b)
    out = project_to_bounds(psi)
    np.testing.assert_allclose(out.experts.covariances[0], np.diag([2.0, 2.0]), rtol=1e-14)


def test_gating_row_scaled_by_half():
    b = ParameterBounds(1.0, 1.0, 0.5, 2.0, 1)
    psi = SgameParams(GatingParams(np.array([0.5]), np.array([[1.0, -0.5]])),
                      ExpertParams(np.zeros((1, 1)), np.zeros((1, 1, 2)), np.ones((1, 1, 1))), b)
    out = project_to_bounds(psi)
    assert out.gating.intercepts[0] == pytest.approx(0.25)
    np.testing.assert_allclose(out.gating.slopes, [[0.5, -0.25]])
    assert abs(out.gating.intercepts[0]) + np.abs(out.gating.slopes).sum() <= 1.0 + 1e-15
    assert bound_violations(out) == []


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 50.0))
def test_projection_idempotent_and_feasible(seed, scale):
    rng = np.random.default_rng(seed)
    k, p, q = 3, 4, 2
    b = ParameterBounds(1.0, 2.0, 0.5, 4.0, k)
    a = rng.standard_normal((q, q, k))
    covs = np.stack([scale * (a[..., j] @ a[..., j].T) + 1e-3 * np.eye(q) for j in range(k)])
    psi = SgameParams(
        GatingParams(scale * rng.standard_normal(k), scale * rng.standard_normal((k, p))),
        ExpertParams(scale * rng.standard_normal((k, q)), scale * rng.standard_normal((k, q, p)), covs),
        b,
    )
    once = project_to_bounds(psi)
    assert bound_violations(once) == []
    twice = project_to_bounds(once)
    assert twice is once


def test_check_in_class_names_constraint():
    b = ParameterBounds(1.0, 1.0, 0.5, 2.0, 1)
    psi = SgameParams(GatingParams(np.array([3.0]), np.zeros((1, 1))),
                      ExpertParams(np.zeros((1, 1)), np.zeros((1, 1, 1)), np.ones((1, 1, 1))), b)
    with pytest.raises(BoundsViolationError, match="A_gamma"):
        check_in_class(psi)


def test_exact_sup_allows_mixed_signs():
    # sup_x |w.x| over the cube is max(pos, neg) = 1, so |b| + 1 = 2 <= A_gamma passes
    b = ParameterBounds(2.0, 1.0, 0.5, 2.0, 1)
    psi = SgameParams(GatingParams(np.array([1.0]), np.array([[1.0, -1.0]])),
                      ExpertParams(np.zeros((1, 1)), np.zeros((1, 1, 2)), np.ones((1, 1, 1))), b)
    assert bound_violations(psi) == []


def test_penalty_examples(rng, wide_bounds):
    psi = gaussian_params([1.0, -2.0], [1.0, 2.0])
    assert penalty(psi, 3.0) == 0.0
    psi = SgameParams(GatingParams(np.zeros(1), np.array([[-3.0]])),
                      ExpertParams(np.zeros((1, 1)), np.zeros((1, 1, 1)), np.ones((1, 1, 1))),
                      ParameterBounds(5, 5, 0.1, 10, 1))
    assert penalty(psi, 1.0) == 3.0
    psi = random_params(wide_bounds, 3, 2, rng)
    assert penalty(psi, 2 * 0.37) == pytest.approx(2 * penalty(psi, 0.37), rel=1e-15)
    with pytest.raises(ValueError):
        penalty(psi, -1.0)


def test_penalty_ignores_intercepts_and_covariances(rng, wide_bounds):
    psi = random_params(wide_bounds, 3, 1, rng)
    other = psi.replace(
        gating=GatingParams(psi.gating.intercepts + 1, psi.gating.slopes),
        experts=ExpertParams(psi.experts.intercepts - 2, psi.experts.slopes, psi.experts.covariances * 3),
    )
    assert penalty(other, 0.7) == penalty(psi, 0.7)


def test_flatten_round_trip(rng, wide_bounds):
    psi = random_params(wide_bounds, 3, 2, rng)
    back = unflatten_params(flatten_params(psi), psi)
    np.testing.assert_array_equal(flatten_params(back), flatten_params(psi))
