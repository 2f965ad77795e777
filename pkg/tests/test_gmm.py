import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphmm_sid.hmm.gmm import (VAR_FLOOR, GaussianMixture, GmmError, gmm_fit, gmm_log_density,
                               gmm_sample, init_mixture, state_log_densities)


def _direct_density(gmm, x):
    total = 0.0
    for w, mu, var in zip(gmm.weights, gmm.means, gmm.variances):
        total += w * np.prod(np.exp(-0.5 * (x - mu) ** 2 / var) / np.sqrt(2 * np.pi * var))
    return total


def test_single_component_at_mean():
    g = GaussianMixture([1.0], [[0.3]], [[1.0]])
    assert gmm_log_density(g, np.array([0.3])) == pytest.approx(-0.5 * np.log(2 * np.pi),
                                                                abs=1e-15)


def test_identical_components_collapse():
    one = GaussianMixture([1.0], [[1.0, 2.0]], [[0.5, 2.0]])
    two = GaussianMixture([0.5, 0.5], [[1.0, 2.0]] * 2, [[0.5, 2.0]] * 2)
    x = np.array([0.7, 2.5])
    assert gmm_log_density(two, x) == pytest.approx(gmm_log_density(one, x), abs=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_matches_direct_summation(seed):
    rng = np.random.default_rng(seed)
    g = GaussianMixture(rng.dirichlet(np.ones(3)), rng.normal(0, 1, (3, 4)),
                        rng.uniform(0.2, 2.0, (3, 4)))
    x = rng.normal(0, 1, 4)
    direct = _direct_density(g, x)
    assert np.exp(gmm_log_density(g, x)) == pytest.approx(direct, rel=1e-10)


def test_dimension_mismatch():
    g = GaussianMixture([1.0], [[0.0, 0.0]], [[1.0, 1.0]])
    with pytest.raises(GmmError):
        gmm_log_density(g, np.zeros(3))
    with pytest.raises(GmmError):
        GaussianMixture([1.0, 0.0], [[0.0]], [[1.0]])


def test_state_log_densities_match_per_state():
    rng = np.random.default_rng(0)
    gmms = [GaussianMixture(rng.dirichlet(np.ones(2)), rng.normal(0, 1, (2, 3)),
                            rng.uniform(0.5, 1.5, (2, 3))) for _ in range(4)]
    X = rng.normal(0, 1, (7, 3))
    log_b, comp = state_log_densities(gmms, X)
    assert comp.shape == (7, 4, 2)
    for n, g in enumerate(gmms):
        np.testing.assert_allclose(log_b[:, n], g.log_density(X), rtol=1e-12)


def test_fit_recovers_separated_clusters():
    rng = np.random.default_rng(3)
    data = np.concatenate([rng.normal(-10, 1, (300, 2)), rng.normal(10, 1, (300, 2))])
    g = gmm_fit(data, 2, seed=0)
    assert sorted(np.sign(g.means[:, 0])) == [-1, 1]
    for mean in g.means:
        centroid = data[np.sign(data[:, 0]) == np.sign(mean[0])].mean(axis=0)
        assert np.max(np.abs(mean - centroid)) < 0.1
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_fit_identical_points():
    g = gmm_fit(np.full((20, 3), 1.5), 1)
    np.testing.assert_array_equal(g.means[0], np.full(3, 1.5))
    np.testing.assert_array_equal(g.variances[0], np.full(3, VAR_FLOOR))


def test_fit_needs_enough_points():
    with pytest.raises(GmmError):
        gmm_fit(np.zeros((2, 1)), 3)


@given(st.integers(0, 10_000), st.integers(1, 4))
@settings(max_examples=20, deadline=None)
def test_fit_is_monotone(seed, m):
    rng = np.random.default_rng(seed)
    data = np.concatenate([rng.normal(c, 1.0, (40, 2)) for c in rng.normal(0, 4, 3)])
    history = []
    g = gmm_fit(data, m, seed=seed, history=history)
    assert np.all(np.diff(history) >= -1e-8)
    assert np.all(g.variances >= VAR_FLOOR)
    assert g.weights.sum() == pytest.approx(1.0, abs=1e-12)


def test_init_mixture_equal_weights_and_floor():
    rng = np.random.default_rng(0)
    g = init_mixture(np.zeros((3, 2)), 5, rng)
    np.testing.assert_array_equal(g.weights, np.full(5, 0.2))
    assert np.all(g.variances >= VAR_FLOOR)


def test_sample_moments():
    rng = np.random.default_rng(0)
    g = GaussianMixture([0.25, 0.75], [[-2.0], [2.0]], [[0.5], [0.5]])
    xs = np.array([gmm_sample(g, rng) for _ in range(20000)])[:, 0]
    assert xs.mean() == pytest.approx(1.0, abs=0.05)
