import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lds.errors import CapacityError, DomainError
from lds.stein import (
    HypothesisPair,
    NPTest,
    error_probabilities,
    np_optimal_beta,
    np_tradeoff,
    stein_exponent_check,
)

PAIR = HypothesisPair.from_weights([0.5, 0.5], [0.25, 0.75])
S = 0.143841036225890463719609502997
# Exact binomial NP computation at n = 1000 (mpmath, 50 digits).
E_1000 = {0.05: -0.120213282412, 0.5: -0.147523927195, 0.95: -0.177529977427}

pairs3 = st.tuples(
    st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
    st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3),
).map(lambda t: HypothesisPair.from_weights(np.array(t[0]) / sum(t[0]), np.array(t[1]) / sum(t[1])))


def product_masses(pair, n):
    """Probabilities of every outcome tuple under psi and phi."""
    k = len(pair.psi)
    tuples = list(itertools.product(range(k), repeat=n))
    p = np.array([math.prod(pair.psi.weights[i] for i in t) for t in tuples])
    q = np.array([math.prod(pair.phi.weights[i] for i in t) for t in tuples])
    return p, q


def class_masses(pair, n):
    """Per type class probabilities under psi and phi, from tuple enumeration."""
    k = len(pair.psi)
    p, q = product_masses(pair, n)
    keys = [tuple(np.bincount(t, minlength=k)) for t in itertools.product(range(k), repeat=n)]
    classes = sorted(set(keys))
    index = {c: j for j, c in enumerate(classes)}
    cp = np.zeros(len(classes))
    cq = np.zeros(len(classes))
    for key, a, b in zip(keys, p, q):
        cp[index[key]] += a
        cq[index[key]] += b
    return cp, cq


def curve_at(pair, n, alpha):
    a, b = np_tradeoff(pair, n)
    # Vertices run from alpha = 1 down to 0; np.interp needs increasing x.
    return np.interp(alpha, a[::-1], b[::-1])


def assert_never_beaten(pair, n, p, q, accept):
    """``accept`` rows are acceptance probabilities per outcome (tuple or class)."""
    alpha = 1.0 - accept @ p
    beta = accept @ q
    best = curve_at(pair, n, alpha)
    assert np.all(beta >= best - 1e-12)


def test_validation():
    with pytest.raises(DomainError):
        HypothesisPair.from_weights([1.0, 0.0], [0.5, 0.5])
    with pytest.raises(DomainError):
        np_optimal_beta(PAIR, 5, 1.5)
    with pytest.raises(DomainError):
        NPTest(3, 0.0, 1.5)
    with pytest.raises(CapacityError):
        np_optimal_beta(HypothesisPair.from_weights([0.2, 0.3, 0.5], [0.5, 0.3, 0.2]), 400, 0.5, cap=1000)


def test_relative_entropy():
    assert PAIR.relative_entropy == pytest.approx(S, abs=1e-15)


def test_trivial_tests():
    assert error_probabilities(PAIR, NPTest.accept_all(4)) == pytest.approx((0.0, 1.0), abs=1e-15)
    assert error_probabilities(PAIR, NPTest.reject_all(4)) == pytest.approx((1.0, 0.0), abs=1e-15)


def test_two_outcome_table():
    alpha, beta = error_probabilities(PAIR, NPTest(1, math.log(0.5 / 0.75), 0.0))
    assert (alpha, beta) == pytest.approx((0.5, 0.25), abs=1e-15)
    res = np_optimal_beta(PAIR, 1, 0.5)
    assert res.beta_star == pytest.approx(0.25, abs=1e-15)
    assert res.test.gamma == pytest.approx(1.0)
    res = np_optimal_beta(PAIR, 1, 0.25)
    # Accept symbol 0, and symbol 1 with probability 1/2.
    assert res.beta_star == pytest.approx(0.25 + 0.5 * 0.75, abs=1e-15)


def test_indistinguishable_hypotheses():
    same = HypothesisPair.from_weights([0.3, 0.7], [0.3, 0.7])
    for eps in (0.05, 0.5, 0.95):
        for n in (1, 7, 40):
            assert np_optimal_beta(same, n, eps).beta_star == pytest.approx(1.0 - eps, abs=1e-12)
    assert same.relative_entropy == 0.0


def test_alpha_is_exact():
    for eps in (0.05, 0.5, 0.95, 0.123):
        for n in (1, 10, 100):
            res = np_optimal_beta(PAIR, n, eps)
            assert abs(res.alpha - eps) <= 1e-12
            alpha, beta = error_probabilities(PAIR, res.test)
            assert abs(alpha - eps) <= 1e-12
            assert beta == pytest.approx(res.beta_star, rel=1e-10)


def test_exponent_values_at_n1000():
    rep = stein_exponent_check(PAIR, eps=(0.05, 0.5, 0.95), n_list=(1000,))
    for row in rep.rows:
        assert row.e_n == pytest.approx(E_1000[row.eps], abs=1e-11)
    assert rep.ok
    assert rep.target_exponent == pytest.approx(-S, abs=1e-15)


def test_exhaustive_tuple_subsets():
    # k^n <= 16: every deterministic acceptance region over outcome tuples.
    for pair, n in ((PAIR, 4), (HypothesisPair.from_weights([0.6, 0.4], [0.1, 0.9]), 3),
                    (HypothesisPair.from_weights([0.2, 0.3, 0.5], [0.5, 0.25, 0.25]), 2)):
        p, q = product_masses(pair, n)
        m = p.size
        masks = ((np.arange(2**m)[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
        assert_never_beaten(pair, n, p, q, masks)


@pytest.mark.parametrize("pair,n", [
    (PAIR, 6),
    (HypothesisPair.from_weights([0.7, 0.3], [0.4, 0.6]), 5),
    (HypothesisPair.from_weights([0.2, 0.3, 0.5], [0.5, 0.25, 0.25]), 3),
    (HypothesisPair.from_weights([0.25, 0.25, 0.5], [0.5, 0.25, 0.25]), 3),
])
def test_exhaustive_class_subsets(pair, n):
    # A tuple-level test and its class-averaged randomized version have equal errors,
    # so sweeping class subsets (plus random fractions) covers all tests.
    p, q = class_masses(pair, n)
    m = p.size
    masks = ((np.arange(2**m)[:, None] >> np.arange(m)[None, :]) & 1).astype(float)
    assert_never_beaten(pair, n, p, q, masks)
    rng = np.random.default_rng(0)
    assert_never_beaten(pair, n, p, q, rng.uniform(size=(5000, m)))


@pytest.mark.parametrize("n", [4, 5, 6])
def test_random_class_tests_three_letters(n):
    pair = HypothesisPair.from_weights([0.2, 0.3, 0.5], [0.5, 0.25, 0.25])
    p, q = class_masses(pair, n)
    rng = np.random.default_rng(n)
    masks = (rng.uniform(size=(20000, p.size)) < rng.uniform(size=(20000, 1))).astype(float)
    assert_never_beaten(pair, n, p, q, masks)


@given(pairs3, st.integers(1, 12), st.floats(0.01, 0.99), st.floats(0.01, 0.99))
def test_monotone_in_eps(pair, n, e1, e2):
    lo, hi = sorted((e1, e2))
    assert np_optimal_beta(pair, n, hi).beta_star <= np_optimal_beta(pair, n, lo).beta_star + 1e-12


@given(pairs3, st.integers(1, 12), st.floats(0.01, 0.99))
def test_monotone_in_n(pair, n, eps):
    assert np_optimal_beta(pair, n + 1, eps).beta_star <= np_optimal_beta(pair, n, eps).beta_star + 1e-12


@given(pairs3, st.integers(1, 10), st.floats(0.01, 0.99))
def test_merging_symbols_never_helps(pair, n, eps):
    psi, phi = pair.psi.weights, pair.phi.weights
    merged = HypothesisPair.from_weights([psi[0], psi[1] + psi[2]], [phi[0], phi[1] + phi[2]])
    assert np_optimal_beta(merged, n, eps).beta_star >= np_optimal_beta(pair, n, eps).beta_star - 1e-12


@given(pairs3, st.integers(1, 10), st.floats(0.01, 0.99))
def test_randomization_exact_property(pair, n, eps):
    assert abs(np_optimal_beta(pair, n, eps).alpha - eps) <= 1e-12
