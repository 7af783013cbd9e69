import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal
from scipy.special import logsumexp
from scipy.stats import multivariate_normal

from pfdist.distributions import (
    ContractError,
    EmpiricalSpec,
    GaussianMixtureSpec,
    GaussianSpec,
    OutOfDomainError,
    empirical_weights,
    log_density,
    random_gaussian,
    random_gmm,
    sample,
    score,
    score_empirical,
    score_gaussian,
    score_gmm,
    spec_from_dict,
    spec_to_dict,
)
from pfdist.rng import Stream


# -- independent log-density oracles (scipy, explicit sums) --------------------


def oracle_logpdf(spec, x, t):
    if isinstance(spec, GaussianSpec):
        return multivariate_normal(spec.mean, spec.cov + t * t * np.eye(spec.dim)).logpdf(x)
    if isinstance(spec, GaussianMixtureSpec):
        terms = [
            np.log(w) + multivariate_normal(c.mean, c.cov + t * t * np.eye(c.dim)).logpdf(x)
            for w, c in zip(spec.weights, spec.components)
        ]
        return logsumexp(terms)
    terms = [multivariate_normal(y, t * t * np.eye(spec.dim)).logpdf(x) for y in spec.atoms]
    return logsumexp(terms) - np.log(len(spec))


def fd_grad(f, x, h):
    g = np.empty_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def rel_gap(a, b, floor):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), floor)


# -- construction --------------------------------------------------------------


def test_gaussian_eigendecomposition_reconstructs_covariance():
    rng = np.random.default_rng(0)
    g = random_gaussian(6, rng)
    rec = (g.evecs * g.evals) @ g.evecs.T
    assert np.linalg.norm(rec - g.cov) / np.linalg.norm(g.cov) < 1e-10


def test_tiny_eigenvalues_are_clamped():
    cov = np.diag([1.0, 1e-14])
    g = GaussianSpec(np.zeros(2), cov)
    assert g.evals.min() == 0.0


def test_asymmetric_and_indefinite_covariances_are_rejected():
    with pytest.raises(ContractError):
        GaussianSpec(np.zeros(2), [[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ContractError):
        GaussianSpec(np.zeros(2), np.diag([1.0, -0.5]))


def test_mixture_weights_must_sum_to_one():
    g = GaussianSpec(np.zeros(2), np.eye(2))
    with pytest.raises(ContractError):
        GaussianMixtureSpec([0.5, 0.4], (g, g))
    with pytest.raises(ContractError):
        GaussianMixtureSpec([0.5, 0.5], (g, GaussianSpec(np.zeros(3), np.eye(3))))


def test_dimension_is_consistent_across_variants():
    rng = np.random.default_rng(1)
    assert random_gaussian(3, rng).dim == 3
    assert random_gmm(4, 3, rng).dim == 3
    assert EmpiricalSpec(np.zeros((5, 3))).dim == 3


# -- score_gaussian ------------------------------------------------------------


def test_score_gaussian_isotropic():
    g = GaussianSpec(np.zeros(2), np.eye(2))
    assert_allclose(score_gaussian(g, [1.0, 0.0], 1.0), [-0.5, 0.0], atol=1e-15)


def test_score_gaussian_vanishes_at_mean():
    rng = np.random.default_rng(2)
    g = random_gaussian(4, rng)
    assert_allclose(score_gaussian(g, g.mean, 0.7), np.zeros(4), atol=1e-15)


def test_score_gaussian_diagonal_hand_value():
    g = GaussianSpec([1.0, 2.0], np.diag([4.0, 9.0]))
    x = np.array([3.0, 5.0])
    s = score_gaussian(g, x, 2.0)
    assert_allclose(s, [-0.25, -3.0 / 13.0], rtol=1e-14)
    fd = fd_grad(lambda z: oracle_logpdf(g, z, 2.0), x, 1e-5)
    assert_allclose(fd, s, rtol=1e-7)


def test_score_gaussian_dimension_mismatch():
    g = GaussianSpec(np.zeros(2), np.eye(2))
    with pytest.raises(ContractError):
        score_gaussian(g, np.zeros(3), 1.0)


def test_score_gaussian_batch_matches_single():
    rng = np.random.default_rng(3)
    g = random_gaussian(3, rng)
    xs = rng.standard_normal((5, 3))
    batch = score_gaussian(g, xs, 0.3)
    for x, b in zip(xs, batch):
        assert_allclose(score_gaussian(g, x, 0.3), b, rtol=1e-14)


# -- score_gmm -----------------------------------------------------------------


def test_score_gmm_single_component_equals_gaussian():
    rng = np.random.default_rng(4)
    for _ in range(20):
        g = random_gaussian(5, rng)
        mix = GaussianMixtureSpec([1.0], (g,))
        x = 3 * rng.standard_normal(5)
        t = float(rng.uniform(0.01, 10))
        a, b = score_gmm(mix, x, t), score_gaussian(g, x, t)
        assert np.linalg.norm(a - b) <= 1e-13 * np.linalg.norm(b)


def test_score_gmm_symmetric_components_cancel_at_origin():
    a = np.array([2.0, -1.0])
    mix = GaussianMixtureSpec.from_params([0.5, 0.5], [a, -a], [np.eye(2), np.eye(2)])
    assert_allclose(score_gmm(mix, np.zeros(2), 0.5), np.zeros(2), atol=1e-15)


def test_score_gmm_two_components_matches_finite_differences():
    mix = GaussianMixtureSpec.from_params(
        [0.3, 0.7], [[-1.0, 0.5], [1.5, -0.5]], [[[1.0, 0.3], [0.3, 0.5]], [[0.4, -0.1], [-0.1, 0.8]]]
    )
    x = np.array([0.2, 0.1])
    t = 0.6
    fd = fd_grad(lambda z: oracle_logpdf(mix, z, t), x, 1e-5)
    assert rel_gap(score_gmm(mix, x, t), fd, 1e-8) < 1e-6


def test_score_gmm_zero_weight_component_is_ignored():
    g1 = GaussianSpec([0.0, 0.0], np.eye(2))
    g2 = GaussianSpec([5.0, 5.0], np.eye(2))
    mix = GaussianMixtureSpec([1.0, 0.0], (g1, g2))
    x = np.array([1.0, 2.0])
    assert_allclose(score_gmm(mix, x, 0.5), score_gaussian(g1, x, 0.5), rtol=1e-13)


# -- score_empirical -----------------------------------------------------------


def test_score_empirical_single_atom():
    y = np.array([1.0, -2.0, 0.5])
    emp = EmpiricalSpec(y[None, :])
    x = np.array([0.3, 0.3, 0.3])
    assert_allclose(score_empirical(emp, x, 0.4), (y - x) / 0.16, rtol=1e-14)


def test_score_empirical_equidistant_point_uses_midpoint():
    emp = EmpiricalSpec([[0.0, 0.0], [2.0, 0.0]])
    x = np.array([1.0, 3.0])
    t = 0.5
    assert_allclose(score_empirical(emp, x, t), (np.array([1.0, 0.0]) - x) / t**2, rtol=1e-13)


def test_score_empirical_three_atoms_matches_finite_differences():
    emp = EmpiricalSpec([[0.0, 0.0], [1.0, 0.5], [-0.5, 1.0]])
    x = np.array([0.2, 0.4])
    t = 0.7
    fd = fd_grad(lambda z: oracle_logpdf(emp, z, t), x, 1e-5)
    assert rel_gap(score_empirical(emp, x, t), fd, 1e-8) < 1e-6


def test_score_empirical_rejects_noise_below_floor():
    emp = EmpiricalSpec([[0.0]])
    with pytest.raises(OutOfDomainError):
        score_empirical(emp, np.zeros(1), 0.001)
    score_empirical(emp, np.zeros(1), 0.002)


def test_score_empirical_separated_atoms_do_not_underflow():
    emp = EmpiricalSpec([[0.0], [100.0]])
    s = score_empirical(emp, np.array([40.0]), 0.002)
    assert np.all(np.isfinite(s))
    assert_allclose(s, [(0.0 - 40.0) / 0.002**2])


# -- properties ----------------------------------------------------------------

seeds = st.integers(0, 2**31 - 1)
noise_levels = st.floats(0.01, 80.0)


@settings(max_examples=60, deadline=None)
@given(seed=seeds, t=noise_levels)
def test_gaussian_and_gmm_scores_match_log_density_gradients(seed, t):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 5))
    spec = random_gaussian(d, rng) if rng.random() < 0.5 else random_gmm(3, d, rng)
    scale = np.sqrt(t * t + 0.1)
    x = rng.standard_normal(d) * 2 * scale
    fd = fd_grad(lambda z: oracle_logpdf(spec, z, t), x, 1e-4 * scale)
    assert rel_gap(score(spec, x, t), fd, 1e-3 / scale) <= 1e-5


@settings(max_examples=60, deadline=None)
@given(seed=seeds, t=st.floats(0.2, 5.0))
def test_empirical_score_matches_log_density_gradient(seed, t):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 4))
    emp = EmpiricalSpec(rng.standard_normal((int(rng.integers(1, 6)), d)))
    x = rng.standard_normal(d)
    fd = fd_grad(lambda z: oracle_logpdf(emp, z, t), x, 1e-4 * t)
    assert rel_gap(score_empirical(emp, x, t), fd, 1e-3 / t) <= 1e-4


@settings(max_examples=100, deadline=None)
@given(seed=seeds, t=st.floats(0.002, 80.0), spread=st.floats(0.0, 1e3))
def test_empirical_weights_sum_to_one(seed, t, spread):
    rng = np.random.default_rng(seed)
    emp = EmpiricalSpec(spread * rng.standard_normal((7, 3)))
    w = empirical_weights(emp, spread * rng.standard_normal((4, 3)), t)
    assert np.all(np.abs(w.sum(axis=1) - 1.0) <= 1e-12)


def test_package_log_density_agrees_with_oracle():
    rng = np.random.default_rng(5)
    mix = random_gmm(3, 2, rng)
    emp = EmpiricalSpec(rng.standard_normal((4, 2)))
    x = rng.standard_normal(2)
    assert_allclose(log_density(mix, x, 0.3), oracle_logpdf(mix, x, 0.3), rtol=1e-12)
    assert_allclose(log_density(emp, x, 0.3), oracle_logpdf(emp, x, 0.3), rtol=1e-12)


# -- sampling ------------------------------------------------------------------


def test_single_atom_empirical_samples_are_the_atom():
    emp = EmpiricalSpec([[1.5, -2.0]])
    xs = sample(emp, 50, Stream(3))
    assert_array_equal(xs, np.tile([1.5, -2.0], (50, 1)))


def test_gaussian_sample_mean_within_clt_bound():
    rng = np.random.default_rng(6)
    g = random_gaussian(4, rng)
    n = 100_000
    xs = sample(g, n, Stream(11))
    bound = 4 * np.sqrt(g.evals.max() / n)
    assert np.all(np.abs(xs.mean(axis=0) - g.mean) <= bound)


def test_mixture_with_zero_weight_only_draws_first_component():
    g1 = GaussianSpec([-10.0], [[0.01]])
    g2 = GaussianSpec([10.0], [[0.01]])
    mix = GaussianMixtureSpec([1.0, 0.0], (g1, g2))
    xs = sample(mix, 2000, Stream(1))
    assert np.all(xs < 0)


def test_sampling_is_reproducible_and_prefix_stable():
    rng = np.random.default_rng(7)
    for spec in (random_gaussian(3, rng), random_gmm(4, 3, rng), EmpiricalSpec(rng.standard_normal((9, 3)))):
        a = sample(spec, 100, Stream(42, (1, 2)))
        b = sample(spec, 100, Stream(42, (1, 2)))
        c = sample(spec, 40, Stream(42, (1, 2)))
        assert_array_equal(a, b)
        assert_array_equal(a[:40], c)
        assert not np.array_equal(a, sample(spec, 100, Stream(43, (1, 2))))


def test_sample_count_must_be_positive():
    with pytest.raises(ContractError):
        sample(EmpiricalSpec([[0.0]]), 0, Stream(0))


# -- serialization -------------------------------------------------------------


def test_json_round_trip_for_every_variant():
    rng = np.random.default_rng(8)
    for spec in (random_gaussian(3, rng), random_gmm(2, 3, rng), EmpiricalSpec(rng.standard_normal((4, 3)))):
        doc = json.loads(json.dumps(spec_to_dict(spec)))
        back = spec_from_dict(doc)
        assert type(back) is type(spec)
        assert spec_to_dict(back) == spec_to_dict(spec)


def test_json_schema_shapes():
    assert spec_to_dict(GaussianSpec([0.0], [[1.0]])) == {"type": "gaussian", "mean": [0.0], "cov": [[1.0]]}
    doc = {"type": "gmm", "components": [{"weight": 1.0, "mean": [0.0], "cov": [[2.0]]}]}
    assert spec_to_dict(spec_from_dict(doc)) == doc
    with pytest.raises(ContractError):
        spec_from_dict({"type": "student-t"})
