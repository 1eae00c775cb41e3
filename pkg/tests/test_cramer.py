import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from lds.cramer import (
    RateFunctionProfile,
    SampledDistribution,
    ScalarDistribution,
    cgf,
    cramer_bound_check,
    exact_mean_tail,
    mc_mean_tail,
    rate_function,
)
from lds.errors import CapacityError, DomainError, StructuralError
from lds.intervals import IntervalSet

FAIR = ScalarDistribution.bernoulli(0.5)
TAIL = IntervalSet.parse("[0.7,1]")


def binary_rate(a, p=0.5):
    out = 0.0
    if a > 0:
        out += a * math.log(a / p)
    if a < 1:
        out += (1 - a) * math.log((1 - a) / (1 - p))
    return out


def test_distribution_merges_atoms():
    d = ScalarDistribution.from_atoms([(1.0, 0.25), (0.0, 0.5), (1.0, 0.25)])
    np.testing.assert_array_equal(d.values, [0.0, 1.0])
    np.testing.assert_allclose(d.probs, [0.5, 0.5])


def test_distribution_rejects_bad_probs():
    with pytest.raises((DomainError, StructuralError)):
        ScalarDistribution.from_atoms([(0.0, 0.6), (1.0, 0.6)])


def test_cgf_bernoulli():
    assert cgf(FAIR, 0.0) == 0.0
    assert cgf(FAIR, 1.0) == pytest.approx(math.log((1 + math.e) / 2), abs=1e-15)


def test_rate_known_values():
    # Closed form a log 2a + (1-a) log 2(1-a) at a = 0.7.
    assert rate_function(FAIR, 0.7) == pytest.approx(0.0822828785050518463915611582608, abs=1e-14)
    assert rate_function(FAIR, 1.0) == pytest.approx(math.log(2), abs=1e-15)
    assert rate_function(FAIR, 0.5) == 0.0
    assert rate_function(FAIR, 1.2) == math.inf


def test_rate_of_degenerate_law():
    d = ScalarDistribution.degenerate(3.0)
    assert rate_function(d, 3.0) == 0.0
    assert rate_function(d, 3.1) == math.inf


@given(st.floats(0.05, 0.95), st.floats(0.0, 1.0))
def test_legendre_matches_binary_entropy(p, a):
    d = ScalarDistribution.bernoulli(p)
    assert abs(rate_function(d, a) - binary_rate(a, p)) <= 1e-9


@given(st.floats(0.02, 0.98))
def test_rate_is_convex_and_nonnegative(a):
    prof = RateFunctionProfile(ScalarDistribution.from_atoms([(-1.0, 0.2), (0.5, 0.5), (2.0, 0.3)]))
    h = 1e-3
    lo, hi = prof.domain
    x = lo + a * (hi - lo)
    if lo < x - h and x + h < hi:
        assert prof.rate(x - h) + prof.rate(x + h) - 2 * prof.rate(x) >= -1e-10
    assert prof.rate(x) >= 0


def test_optimizer_solves_tilted_mean():
    prof = RateFunctionProfile(ScalarDistribution.from_atoms([(-1.0, 0.2), (0.5, 0.5), (2.0, 0.3)]))
    t = prof.optimizer(1.7)
    assert prof.source.cgf_derivatives(t)[0] == pytest.approx(1.7, abs=1e-11)


def test_infimum_over_union_and_empty():
    prof = RateFunctionProfile(FAIR)
    val, arg = prof.infimum(IntervalSet.parse("[0,0.2]U[0.7,0.9]"))
    assert arg == pytest.approx(0.7)
    assert val == pytest.approx(binary_rate(0.7), abs=1e-13)
    assert prof.infimum(IntervalSet.parse("[2,3]"))[0] == math.inf
    assert prof.infimum(IntervalSet.parse("[0.1,0.9]"))[0] == 0.0


def test_exact_tail_matches_binomial():
    for n in (10, 50, 200):
        k0 = math.ceil(0.7 * n - 1e-12)
        assert exact_mean_tail(FAIR, n, TAIL) == pytest.approx(binom.sf(k0 - 1, n, 0.5), rel=1e-12)
    assert exact_mean_tail(FAIR, 10, TAIL) == 0.171875


def test_exact_tail_open_endpoint():
    # (0.7, 1] excludes the 7/10 lattice point.
    expected = binom.sf(7, 10, 0.5)
    assert exact_mean_tail(FAIR, 10, IntervalSet.parse("(0.7,1]")) == pytest.approx(expected, rel=1e-13)


def test_exact_tail_capacity():
    with pytest.raises(CapacityError):
        exact_mean_tail(FAIR, 200, TAIL, cell_cap=1000)


def test_mc_is_deterministic_and_close():
    a = mc_mean_tail(FAIR, 10, TAIL, 20000, seed=3)
    b = mc_mean_tail(FAIR, 10, TAIL, 20000, seed=3, workers=4)
    assert a.estimate == b.estimate
    assert abs(a.estimate - 0.171875) <= 4 * a.standard_error


def test_mc_importance_sampling_rare_event():
    exact = exact_mean_tail(FAIR, 200, TAIL)
    est = mc_mean_tail(FAIR, 200, TAIL, 20000, seed=1, tilt=True)
    assert abs(est.estimate - exact) <= 5 * est.standard_error
    assert est.standard_error < 0.05 * exact


def test_sampled_distribution_guards():
    d = SampledDistribution(lambda rng, shape: rng.normal(size=shape))
    with pytest.raises(DomainError):
        d.cgf(0.5)
    with pytest.raises(DomainError):
        mc_mean_tail(d, 5, TAIL, 10, seed=0, tilt=True)


def test_sampled_gaussian_rate():
    d = SampledDistribution(
        lambda rng, shape: rng.normal(size=shape), mean=0.0,
        cgf_fn=lambda t: t * t / 2, cgf_prime_fn=lambda t: t, mgf_range=(-50.0, 50.0),
    )
    assert rate_function(d, 1.5) == pytest.approx(1.125, abs=1e-9)


def test_bound_check_report():
    rep = cramer_bound_check(FAIR, TAIL, [10, 50, 200])
    assert rep.ok
    assert all(r.upper_ok for r in rep.rows)
    data = rep.to_json()
    assert data["rate_at_inf"]["closure"] == pytest.approx(binary_rate(0.7), abs=1e-13)
    assert len(data["per_n"]) == 3


@given(st.floats(0.1, 0.9), st.floats(0.0, 1.0), st.integers(1, 120))
def test_chernoff_bound_property(p, u, n):
    d = ScalarDistribution.bernoulli(p)
    a = p + u * (1 - p)
    tail = exact_mean_tail(d, n, IntervalSet.closed(a, 1.0))
    assert tail <= math.exp(-n * rate_function(d, a)) * (1 + 1e-9)


@given(st.floats(-3.0, 3.0), st.floats(-3.0, 3.0))
def test_cgf_convex_and_zero_at_origin(t, s):
    d = ScalarDistribution.from_atoms([(-1.0, 0.2), (0.5, 0.5), (2.0, 0.3)])
    assert d.cgf(0.0) == 0.0
    mid = d.cgf((t + s) / 2)
    assert mid <= (d.cgf(t) + d.cgf(s)) / 2 + 1e-10


def test_mc_coverage_over_seeds():
    hits = 0
    for seed in range(200):
        est = mc_mean_tail(FAIR, 10, TAIL, 4000, seed=seed)
        hits += abs(est.estimate - 0.171875) <= 4 * est.standard_error
    assert hits >= 198


def test_tilted_and_plain_agree():
    d = ScalarDistribution.bernoulli(0.3)
    gamma = IntervalSet.parse("[0.5,1]")
    plain = mc_mean_tail(d, 30, gamma, 100000, seed=2)
    tilted = mc_mean_tail(d, 30, gamma, 100000, seed=2, tilt=True)
    joint = math.hypot(plain.standard_error, tilted.standard_error)
    assert abs(plain.estimate - tilted.estimate) <= 4 * joint
