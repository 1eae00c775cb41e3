import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import logsumexp

from conftest import random_model
from lds.errors import CapacityError, ConfigurationError, DomainError, InferenceError
from lds.escort import (
    ParametricModel,
    classical_risk,
    enumerate_tuples,
    escort_candidate,
    escort_posterior,
    escort_predictive,
    escort_predictive_state,
    partition_function,
    posterior_mean,
    quantum_risk,
    risk_minimality_check,
)
from lds.measures import Alphabet


def naive_risk(model, table, n):
    """Direct loop over parameters and data tuples, with the escort weight left unnormalized."""
    k = len(model.alphabet)
    total = 0.0
    for row, t in enumerate(itertools.product(range(k), repeat=n)):
        r = table[row]
        for g in range(model.size):
            p = model.density[g]
            w = model.prior[g] * math.prod(p[i] ** model.beta * model.m[i] for i in t)
            d = sum(model.m[i] * p[i] * math.log(p[i] / r[i]) for i in range(k) if p[i] > 0)
            total += w * d
    return total


def naive_predictive(model, t):
    w = np.array([model.prior[g] * math.prod(model.density[g, i] ** model.beta for i in t) for g in range(model.size)])
    return (w / w.sum()) @ model.density


def test_model_validation():
    with pytest.raises(DomainError):
        ParametricModel.bernoulli_grid([0.3, 0.7], prior=[0.6, 0.5])
    with pytest.raises(DomainError):
        ParametricModel.bernoulli_grid([0.3, 0.7], beta=0.0)
    with pytest.raises(DomainError):
        ParametricModel(Alphabet((0, 1)), [1.0, 1.0], [0, 1], [0.5, 0.5], [[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(DomainError):
        # Support differs between the two grid points.
        ParametricModel.bernoulli_grid([0.0, 0.5])


def test_model_json_roundtrip(two_point):
    back = ParametricModel.from_json(two_point.to_json())
    np.testing.assert_array_equal(back.density, two_point.density)
    assert back.beta == two_point.beta and back.dim == two_point.dim


def test_two_point_posterior(two_point):
    post = escort_posterior(two_point, [1])
    np.testing.assert_allclose(post.weights, [0.3, 0.7], atol=1e-15)
    np.testing.assert_allclose(escort_posterior(two_point, []).weights, [0.5, 0.5])


def test_two_point_predictive(two_point):
    np.testing.assert_allclose(escort_predictive(two_point, [1]), [0.42, 0.58], atol=1e-15)
    np.testing.assert_allclose(escort_predictive(two_point, []), [0.5, 0.5], atol=1e-15)
    state = escort_predictive_state(two_point, [1])
    np.testing.assert_allclose(state.weights, [0.42, 0.58], atol=1e-15)


def test_tempering_limit(two_point):
    w = escort_posterior(two_point.with_beta(1e-9), [1, 1, 1, 0]).weights
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-8)


def test_posterior_mean(two_point):
    assert posterior_mean(two_point, [1], lambda th: float(th == 0.7)) == pytest.approx(0.7, abs=1e-15)
    assert posterior_mean(two_point, [], lambda th: th) == pytest.approx(0.5, abs=1e-15)
    assert posterior_mean(two_point, [1, 0, 1], np.ones(2)) == pytest.approx(1.0, abs=1e-15)


def test_partition_function(two_point):
    pf = partition_function(two_point, [1])
    assert pf.Z == pytest.approx(0.5, abs=1e-15)
    assert pf.F == pytest.approx(math.log(2), abs=1e-15)
    empty = partition_function(two_point, [])
    assert empty.Z == 1.0 and empty.F == 0.0
    with pytest.raises(ConfigurationError):
        _ = pf.F0


def test_partition_function_degenerate_prior(two_point):
    model = two_point.with_prior([0.0, 1.0])
    data = [1, 0, 1]
    expected = -(2 * math.log(0.7) + math.log(0.3))
    assert partition_function(model, data).F == pytest.approx(expected, abs=1e-14)


def test_beta_bernoulli_oracle():
    model = ParametricModel.bernoulli_grid(np.linspace(0.0005, 0.9995, 1000))
    p1 = escort_predictive(model, [1] * 7 + [0] * 3)[1]
    assert abs(p1 - 8 / 12) <= 1e-3


def test_posterior_all_zero_raises():
    model = ParametricModel(Alphabet((0, 1, 2)), [1.0, 1.0, 1.0], [0], [1.0], [[0.5, 0.5, 0.0]])
    with pytest.raises(InferenceError):
        escort_posterior(model, [2])


def test_enumeration_cap():
    assert enumerate_tuples(2, 3).shape == (8, 3)
    with pytest.raises(CapacityError):
        enumerate_tuples(2, 30)


def test_risk_matches_naive_loop(two_point):
    for n in (1, 2, 3):
        table = escort_candidate(two_point, n)
        assert classical_risk(two_point, table, n) == pytest.approx(naive_risk(two_point, table, n), rel=1e-13)


def test_escort_candidate_matches_naive():
    rng = np.random.default_rng(4)
    model = random_model(rng, k=3, g=5)
    table = escort_candidate(model, 2)
    for row, t in enumerate(itertools.product(range(3), repeat=2)):
        np.testing.assert_allclose(table[row], naive_predictive(model, t), rtol=1e-13)


def test_n1_escort_beats_uniform(two_point):
    escort = classical_risk(two_point, lambda t: escort_predictive(two_point, list(t)), 1)
    uniform = classical_risk(two_point, lambda t: [0.5, 0.5], 1)
    assert escort <= uniform
    assert escort == pytest.approx(naive_risk(two_point, escort_candidate(two_point, 1), 1), rel=1e-13)


def test_state_risk_escort_beats_maximally_mixed(two_point):
    escort = quantum_risk(two_point, lambda t: escort_predictive_state(two_point, list(t)), 1)
    mixed = quantum_risk(two_point, lambda t: [0.5, 0.5], 1)
    assert escort <= mixed


def test_risk_zero_for_true_single_model(two_point):
    model = two_point.with_prior([0.0, 1.0])
    assert classical_risk(model, lambda t: [0.3, 0.7], 2) == pytest.approx(0.0, abs=1e-15)


def test_risk_relabeling_invariance():
    model = ParametricModel.bernoulli_grid([0.2, 0.6, 0.9], prior=[0.2, 0.3, 0.5], beta=1.5)
    swapped = ParametricModel(Alphabet((1, 0)), model.m, model.thetas, model.prior, model.density[:, ::-1], 1.5)
    a = classical_risk(model, escort_candidate(model, 3), 3)
    b = classical_risk(swapped, escort_candidate(swapped, 3), 3)
    assert a == pytest.approx(b, rel=1e-13)


def test_risk_minimality_zero_perturbations(two_point):
    rep = risk_minimality_check(two_point, 1, 0)
    assert rep.ok and rep.min_margin == math.inf


def test_risk_minimality_two_point_200(two_point):
    rep = risk_minimality_check(two_point, 1, 200, seed=1)
    assert rep.min_margin >= 0 and rep.min_state_margin >= 0


def test_scaling_reference_measure_preserves_order():
    base = ParametricModel.bernoulli_grid([0.3, 0.7])
    scaled = ParametricModel(base.alphabet, base.m * 2, base.thetas, base.prior, base.density / 2, 1.0)
    uni = np.full((4, 2), 0.5)
    ratio_e = classical_risk(scaled, escort_candidate(scaled, 2), 2) / classical_risk(base, escort_candidate(base, 2), 2)
    ratio_u = classical_risk(scaled, uni / 2, 2) / classical_risk(base, uni, 2)
    assert ratio_e == pytest.approx(ratio_u, rel=1e-12)


@given(st.integers(0, 10**6), st.lists(st.integers(0, 2), max_size=12))
def test_predictive_is_normalized_and_barycentric(seed, data):
    model = random_model(np.random.default_rng(seed))
    pred = escort_predictive(model, data)
    assert abs(pred @ model.m - 1.0) <= 1e-10
    w = escort_posterior(model, data).weights
    assert np.max(np.abs(escort_predictive_state(model, data).weights - (w @ model.density) * model.m)) <= 1e-14


@given(st.integers(0, 10**6), st.lists(st.integers(0, 2), min_size=1, max_size=8), st.integers(0, 2))
def test_appending_a_datum_adds_beta_log_likelihood(seed, data, x):
    model = random_model(np.random.default_rng(seed))
    a = escort_posterior(model, data)
    b = escort_posterior(model, data + [x])
    la = a.log_weights + a.log_Z - logsumexp(a.log_weights)
    lb = b.log_weights + b.log_Z - logsumexp(b.log_weights)
    np.testing.assert_allclose(lb - la, model.beta * model.log_density[:, x], atol=1e-10)


@given(st.integers(0, 10**6), st.sampled_from([1, 2]), st.integers(0, 10**6))
def test_risk_minimality_property(seed, n, pseed):
    model = random_model(np.random.default_rng(seed), k=2, g=3)
    assert risk_minimality_check(model, n, 5, seed=pseed).ok
