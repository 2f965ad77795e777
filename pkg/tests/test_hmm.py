import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import logsumexp
from oracles import (brute_likelihood, brute_viterbi, emission_matrix, paths1, paths2,
                     random_chmm1, random_chmm2)

from sphmm_sid.hmm import (Chmm1Model, Chmm2Model, ConvergenceMonitor, GaussianMixture, HmmError,
                           asymmetry, backward1, backward2, circular_mask, circular_mask3,
                           forward1, forward2, init_chmm1, init_chmm2, init_emissions,
                           likelihood1, likelihood2, sample_chmm1, sample_chmm2, train_chmm1,
                           train_chmm2, viterbi1, viterbi2)

# topology and initialization ---------------------------------------------------


def test_circular_masks():
    m = circular_mask(5)
    assert m.sum(axis=1).tolist() == [3] * 5
    assert m[0, 4] and m[4, 0] and not m[0, 2]
    m3 = circular_mask3(5)
    assert (m3.sum(axis=2) == 3).all()
    for i in range(5):
        np.testing.assert_array_equal(m3[i], m)


def test_init_chmm2_initial_values():
    model = init_chmm2(9, 5, 12)
    assert (model.v == 1.0 / 9).all()
    support = circular_mask3(9)
    assert (model.trans3[support] == 1.0 / 3.0).all()
    assert (model.trans3[~support] == 0.0).all()
    assert (model.trans3.sum(axis=2) == 1.0).all()
    for g in model.emissions:
        assert (g.weights == 0.2).all()


def test_init_chmm1_symmetric():
    model = init_chmm1(7, 2, 3)
    np.testing.assert_array_equal(model.trans, model.trans.T)
    assert asymmetry(model) == 0.0
    assert (model.pi == 1.0 / 7).all()


@pytest.mark.parametrize("n", [1, 2])
def test_circular_needs_three_states(n):
    with pytest.raises(HmmError):
        init_chmm2(n, 1, 1)
    with pytest.raises(HmmError):
        init_chmm1(n, 1, 1)


def test_emission_init_methods():
    rng = np.random.default_rng(0)
    data = [np.concatenate([rng.normal(c, 0.1, (10, 2)) for c in (0.0, 5.0, 10.0)])
            for _ in range(3)]
    seg = init_emissions(init_chmm2(3, 2, 2), data, "segment", seed=1)
    km = init_emissions(init_chmm2(3, 2, 2), data, "kmeans", seed=1)
    for model in (seg, km):
        centres = [g.means.mean(axis=0)[0] for g in model.emissions]
        np.testing.assert_allclose(centres, [0.0, 5.0, 10.0], atol=0.2)
        for g in model.emissions:
            assert (g.weights == 0.5).all()
    with pytest.raises(ValueError):
        init_emissions(init_chmm2(3, 2, 2), data, "random")


# exhaustive oracles ------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("T", [4, 5, 6])
def test_likelihood2_matches_enumeration(seed, T):
    rng = np.random.default_rng(seed)
    model = random_chmm2(rng, 3, m=2)
    x = rng.normal(0, 2, (T, 1))
    ref = brute_likelihood(paths2(model, x))
    assert likelihood2(model, x) == pytest.approx(ref, rel=1e-10)


@pytest.mark.parametrize("seed", range(20))
def test_likelihood1_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    model = random_chmm1(rng, 3, m=2)
    x = rng.normal(0, 2, (5, 1))
    assert likelihood1(model, x) == pytest.approx(brute_likelihood(paths1(model, x)), rel=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_sparse_ring_matches_enumeration(seed):
    # N = 4 is the smallest ring with forbidden transitions
    rng = np.random.default_rng(seed)
    m2 = random_chmm2(rng, 4)
    x = rng.normal(0, 2, (4, 1))
    assert likelihood2(m2, x) == pytest.approx(brute_likelihood(paths2(m2, x)), rel=1e-10)
    m1 = random_chmm1(rng, 4)
    assert likelihood1(m1, x) == pytest.approx(brute_likelihood(paths1(m1, x)), rel=1e-10)


@pytest.mark.parametrize("seed", range(10))
def test_viterbi_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 2, (5, 1))
    m2 = random_chmm2(rng, 3)
    path, score = viterbi2(m2, x)
    ref_path, ref_score = brute_viterbi(paths2(m2, x))
    np.testing.assert_array_equal(path, ref_path)
    assert score == pytest.approx(ref_score, rel=1e-10)
    assert score <= likelihood2(m2, x)

    m1 = random_chmm1(rng, 4)
    path, score = viterbi1(m1, x)
    ref_path, ref_score = brute_viterbi(paths1(m1, x))
    np.testing.assert_array_equal(path, ref_path)
    assert score == pytest.approx(ref_score, rel=1e-10)


def test_linear_domain_forward_agrees():
    rng = np.random.default_rng(7)
    model = random_chmm2(rng, 3)
    x = rng.normal(0, 2, (8, 1))
    b = emission_matrix(model.emissions, x)
    n = 3
    alpha = model.v * b[0][None, :]
    for t in range(1, len(x)):
        alpha = np.einsum("ij,ijk->jk", alpha, model.trans3) * b[t][None, :]
    lattice = forward2(model, x).alpha
    np.testing.assert_allclose(np.exp(lattice[-1]), alpha, rtol=1e-10)
    assert likelihood2(model, x) == pytest.approx(np.log(alpha.sum() / n), rel=1e-10)


# lattices ---------------------------------------------------------------------


def test_terminal_backward_slice():
    rng = np.random.default_rng(1)
    model = random_chmm2(rng, 3)
    beta = backward2(model, rng.normal(size=(6, 1))).beta
    np.testing.assert_array_equal(beta[-1], np.full((3, 3), np.log(1.0 / 3)))
    model9 = init_chmm2(9, 2, 1)
    beta9 = backward2(model9, rng.normal(size=(4, 1))).beta
    np.testing.assert_array_equal(beta9[-1], np.full((9, 9), np.log(1.0 / 9)))


@given(st.integers(0, 2**31), st.integers(2, 12))
@settings(max_examples=30, deadline=None)
def test_every_slice_gives_the_same_total(seed, T):
    rng = np.random.default_rng(seed)
    model = random_chmm2(rng, int(rng.integers(3, 6)), m=2)
    x = rng.normal(0, 2, (T, 1))
    total = likelihood2(model, x)
    alpha, beta = forward2(model, x).alpha, backward2(model, x).beta
    per_slice = logsumexp(alpha + beta, axis=(1, 2))
    np.testing.assert_allclose(per_slice, total, rtol=1e-10)


def test_first_order_slices_agree():
    rng = np.random.default_rng(2)
    model = random_chmm1(rng, 5)
    x = rng.normal(0, 2, (9, 1))
    per_slice = logsumexp(forward1(model, x) + backward1(model, x), axis=1)
    np.testing.assert_allclose(per_slice, likelihood1(model, x), rtol=1e-10)


def _single_state2(mean=0.0, var=1.0):
    g = GaussianMixture([1.0], [[mean]], [[var]])
    return Chmm2Model(np.ones((1, 1)), np.ones((1, 1, 1)), [g], np.ones((1, 1, 1), bool))


def test_single_state_closed_forms():
    x = np.array([[0.1], [-0.4], [1.3], [0.0]])
    log_b = np.log(emission_matrix(_single_state2().emissions, x))[:, 0]
    model = _single_state2()
    np.testing.assert_allclose(forward2(model, x).alpha[:, 0, 0], np.cumsum(log_b), rtol=1e-12)
    assert likelihood2(model, x) == pytest.approx(log_b.sum(), rel=1e-12)
    # beta_t = sum of the emissions after t (terminal weight 1/N = 1)
    suffix = np.concatenate([np.cumsum(log_b[::-1])[::-1][1:], [0.0]])
    np.testing.assert_allclose(backward2(model, x).beta[:, 0, 0], suffix, atol=1e-12)
    m1 = Chmm1Model(np.ones(1), np.ones((1, 1)), model.emissions, np.ones((1, 1), bool))
    assert likelihood1(m1, x) == pytest.approx(log_b.sum(), rel=1e-12)


@pytest.mark.parametrize("n", [3, 5, 9])
def test_constant_emissions_give_c_to_the_t(n):
    rng = np.random.default_rng(n)
    model = random_chmm2(rng, n)
    # every state emits N(0, 1) and every frame is 0, so b = c everywhere
    flat = GaussianMixture([1.0], [[0.0]], [[1.0]])
    model.emissions = [flat] * n
    x = np.zeros((7, 1))
    log_c = -0.5 * np.log(2 * np.pi)
    assert likelihood2(model, x) == pytest.approx(7 * log_c, rel=1e-13)


def test_emission_scaling_shifts_by_t_log_c():
    rng = np.random.default_rng(4)
    model = random_chmm2(rng, 3)
    x = rng.normal(0, 1, (6, 1))
    # scaling x and the model by s divides every density by s
    s = 3.0
    scaled = Chmm2Model(model.v, model.trans3,
                        [GaussianMixture(g.weights, g.means * s, g.variances * s * s)
                         for g in model.emissions], model.mask)
    shift = likelihood2(scaled, x * s) - likelihood2(model, x)
    assert shift == pytest.approx(-6 * np.log(s), rel=1e-10)


def test_short_sequence_rejected():
    with pytest.raises(HmmError, match="too short"):
        likelihood2(init_chmm2(3, 1, 1), np.zeros((1, 1)))


# viterbi --------------------------------------------------------------------------


def test_viterbi_follows_forced_cycle():
    n = 5
    mask = circular_mask3(n)
    trans3 = np.zeros((n, n, n))
    for i in range(n):
        for j in range(n):
            trans3[i, j, (j + 1) % n] = 1.0
    emissions = [GaussianMixture([1.0], [[10.0 * k]], [[0.01]]) for k in range(n)]
    model = Chmm2Model(np.full((n, n), 1.0 / n), trans3, emissions, mask)
    x = np.array([[10.0 * ((2 + t) % n)] for t in range(12)])
    path, score = viterbi2(model, x)
    np.testing.assert_array_equal(path, [(2 + t) % n for t in range(12)])
    assert np.isfinite(score)


def test_viterbi_ties_go_to_lowest_state():
    model = init_chmm2(3, 1, 1)
    path, _ = viterbi2(model, np.zeros((4, 1)))
    np.testing.assert_array_equal(path, [0, 0, 0, 0])


@pytest.mark.parametrize("seed", range(5))
def test_state_permutation(seed):
    rng = np.random.default_rng(seed)
    n = 3  # every relabelling of a 3-ring is a ring
    model = random_chmm2(rng, n, m=2)
    perm = rng.permutation(n)
    inv = np.argsort(perm)
    permuted = Chmm2Model(model.v[np.ix_(inv, inv)], model.trans3[np.ix_(inv, inv, inv)],
                          [model.emissions[k] for k in inv], model.mask)
    x = rng.normal(0, 2, (15, 1))
    a, b = likelihood2(model, x), likelihood2(permuted, x)
    assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
    path, _ = viterbi2(model, x)
    ppath, _ = viterbi2(permuted, x)
    np.testing.assert_array_equal(perm[path], ppath)


# training -------------------------------------------------------------------------


def _monotone(history):
    return np.all(np.diff(history) >= -1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_em_monotone_and_structure_preserved(seed):
    rng = np.random.default_rng(seed)
    truth = random_chmm2(rng, 4, m=2)
    data = [sample_chmm2(truth, 25, rng)[1] for _ in range(6)]
    init = init_emissions(init_chmm2(4, 2, 1), data, "kmeans", seed)
    monitor = ConvergenceMonitor(tol=-np.inf, n_iter=21)
    fit = train_chmm2(init, data, monitor=monitor)
    assert len(monitor.history) == 21 and _monotone(monitor.history)
    assert (fit.trans3[~fit.mask] == 0).all()
    np.testing.assert_allclose(fit.trans3.sum(axis=2), 1.0, atol=1e-12)
    np.testing.assert_allclose(fit.v.sum(axis=1), 1.0, atol=1e-12)
    for g in fit.emissions:
        assert g.weights.sum() == pytest.approx(1.0, abs=1e-12)

    truth1 = random_chmm1(rng, 5, m=2)
    data1 = [sample_chmm1(truth1, 25, rng)[1] for _ in range(6)]
    monitor1 = ConvergenceMonitor(tol=-np.inf, n_iter=21)
    fit1 = train_chmm1(init_emissions(init_chmm1(5, 2, 1), data1, "kmeans", seed), data1,
                       monitor=monitor1)
    assert _monotone(monitor1.history)
    assert (fit1.trans[~fit1.mask] == 0).all()
    np.testing.assert_allclose(fit1.trans.sum(axis=1), 1.0, atol=1e-12)


def test_em_stops_at_tolerance():
    rng = np.random.default_rng(0)
    truth = random_chmm2(rng, 3)
    data = [sample_chmm2(truth, 20, rng)[1] for _ in range(10)]
    monitor = ConvergenceMonitor(tol=1e-4, n_iter=50)
    train_chmm2(init_emissions(init_chmm2(3, 1, 1), data, "kmeans"), data, monitor=monitor)
    h = monitor.history
    assert len(h) == 50 or h[-1] - h[-2] < 1e-4
    assert all(b - a >= 1e-4 for a, b in zip(h[:-2], h[1:-1]))


def test_fixed_point_improvement_vanishes():
    rng = np.random.default_rng(3)
    truth = random_chmm2(rng, 3)
    truth.emissions = [GaussianMixture([1.0], [[4.0 * k]], [[1.0]]) for k in range(3)]
    data = [sample_chmm2(truth, 30, rng)[1] for _ in range(30)]
    monitor = ConvergenceMonitor(tol=-np.inf, n_iter=40)
    train_chmm2(truth, data, monitor=monitor)
    gains = np.diff(monitor.history)
    assert np.all(gains >= -1e-8)
    assert np.all(np.diff(gains[-10:]) < 0)
    assert gains[-1] < 1e-4 * gains[0]


def test_training_errors():
    with pytest.raises(HmmError):
        train_chmm2(init_chmm2(3, 1, 1), [])
    with pytest.raises(HmmError):
        train_chmm2(init_chmm2(3, 1, 1), [np.zeros((1, 1))])


def test_asymmetry_reported_after_training():
    rng = np.random.default_rng(5)
    truth = random_chmm1(rng, 5)
    data = [sample_chmm1(truth, 40, rng)[1] for _ in range(5)]
    init = init_emissions(init_chmm1(5, 1, 1), data, "kmeans")
    assert asymmetry(init) == 0.0
    fit = train_chmm1(init, data)
    assert asymmetry(fit) >= 0.0
