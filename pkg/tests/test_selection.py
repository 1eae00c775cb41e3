import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from conftest import random_model
from lds.errors import ConfigurationError, DegenerateModelError, DomainError, StructuralError
from lds.escort import ParametricModel, escort_posterior, escort_predictive, posterior_from_counts
from lds.families import (
    finite_difference_hessian,
    mixture_density,
    mixture_loss,
    normal_mixture_model,
    uniform_bernoulli_grid,
)
from lds.selection import (
    StandardFormExponents,
    TruthSpec,
    aic,
    bayes_losses,
    coherence_check,
    functional_variance,
    learning_coefficient,
    optimal_parameter,
    select_model,
    stochastic_complexity_asymptotics,
    waic,
)

# Hand-evaluated (lambda, m) for standard-form charts (k, h).
LEARNING_TABLE = [
    ([((1, 2), (0, 3))], (Fraction(1, 2), 1)),
    ([((1, 1), (0, 0))], (Fraction(1, 2), 2)),
    ([((1,), (1,)), ((1,), (0,))], (Fraction(1, 2), 1)),
    ([((1,), (0,))], (Fraction(1, 2), 1)),
    ([((2,), (0,))], (Fraction(1, 4), 1)),
    ([((1, 1, 1), (0, 0, 0))], (Fraction(1, 2), 3)),
    ([((2, 1), (1, 0))], (Fraction(1, 2), 2)),
    ([((3, 1), (0, 2))], (Fraction(1, 6), 1)),
    ([((0, 2), (5, 0))], (Fraction(1, 4), 1)),
    ([((1, 1), (0, 0)), ((2, 1), (0, 0))], (Fraction(1, 4), 1)),
]


def kl(p, q):
    return sum(a * math.log(a / b) for a, b in zip(p, q) if a > 0)


@pytest.mark.parametrize("charts,expected", LEARNING_TABLE)
def test_learning_coefficient_table(charts, expected):
    assert learning_coefficient(StandardFormExponents(tuple(charts))) == expected


def test_learning_coefficient_all_zero_chart():
    with pytest.raises(DegenerateModelError):
        learning_coefficient(StandardFormExponents.single((0, 0), (1, 2)))
    with pytest.raises(DomainError):
        StandardFormExponents.single((1, -1), (0, 0))


@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 4)), min_size=1, max_size=4).filter(
    lambda c: any(k > 0 for k, _ in c)))
def test_learning_coefficient_bounds(chart):
    k = tuple(a for a, _ in chart)
    h = tuple(b for _, b in chart)
    lam, m = learning_coefficient(StandardFormExponents.single(k, h))
    assert lam > 0 and 1 <= m <= len(k)
    if all(b == 0 for b in h) and all(a >= 1 for a in k):
        assert lam <= Fraction(len(k), 2)


def test_loss_without_truth(two_point):
    losses = bayes_losses(two_point, [1])
    assert losses.L_bt == pytest.approx(-math.log(0.58), abs=1e-15)
    with pytest.raises(ConfigurationError):
        _ = losses.E_bg


def test_generalization_error_two_point(two_point):
    losses = bayes_losses(two_point, [1], TruthSpec([0.5, 0.5]))
    expected = 0.5 * math.log(0.5 / 0.42) + 0.5 * math.log(0.5 / 0.58)
    assert losses.E_bg == pytest.approx(expected, abs=1e-15)
    # Two-term sum in 50-digit arithmetic.
    assert losses.E_bg == pytest.approx(0.0129666910132522, abs=1e-15)
    assert abs(losses.E_bg - losses.E_bg_bridge) <= 1e-12


def test_generalization_error_zero_when_predictive_is_truth(two_point):
    model = two_point.with_prior([0.0, 1.0])
    losses = bayes_losses(model, [1, 0], TruthSpec([0.3, 0.7]))
    assert losses.E_bg == pytest.approx(0.0, abs=1e-15)
    assert losses.L_bt == pytest.approx(-(math.log(0.7) + math.log(0.3)) / 2, abs=1e-15)


def test_functional_variance_two_point(two_point):
    v = functional_variance(two_point, [1], escort_posterior(two_point, []))
    assert v == pytest.approx((math.log(0.7 / 0.3) / 2) ** 2, abs=1e-15)
    assert functional_variance(two_point.with_prior([1.0, 0.0]), [1, 0, 0]) == 0.0


def test_functional_variance_additive(two_point):
    post = escort_posterior(two_point, [1, 0])
    a = functional_variance(two_point, [1, 1], post)
    b = functional_variance(two_point, [0], post)
    assert functional_variance(two_point, [1, 1, 0], post) == pytest.approx(a + b, abs=1e-15)


def test_waic_degenerate_prior(two_point):
    model = two_point.with_prior([0.0, 1.0])
    assert waic(model, [1, 0, 1]) == bayes_losses(model, [1, 0, 1]).L_bt


def test_aic_grid_argmax():
    model = ParametricModel.bernoulli_grid(np.linspace(0.05, 0.95, 19))
    data = [1] * 7 + [0] * 3
    expected = -(7 * math.log(0.7) + 3 * math.log(0.3)) / 10 + 1 / 10
    assert aic(model, data) == pytest.approx(expected, abs=1e-14)
    assert aic(model, data, dim=2) - aic(model, data) == pytest.approx(0.1, abs=1e-15)


def test_aic_perfect_fit():
    model = ParametricModel(("a", "b"), [1.0, 1.0], [0.0], [1.0], [[1.0, 0.0]], dim=1)
    assert aic(model, ["a"] * 4) == pytest.approx(0.25)


def test_optimal_parameter_three_point():
    model = ParametricModel.bernoulli_grid([0.3, 0.5, 0.7])
    opt = optimal_parameter(model, TruthSpec([0.4, 0.6]))
    assert opt.theta0.tolist() == [1]
    np.testing.assert_allclose(opt.losses[1:], [math.log(2), -0.6 * math.log(0.7) - 0.4 * math.log(0.3)], atol=1e-15)
    assert opt.losses[2] == pytest.approx(0.6955940880, abs=1e-9)
    assert np.all(opt.D >= -1e-15)


def test_optimal_parameter_realizable():
    model = ParametricModel.bernoulli_grid([0.3, 0.5, 0.7])
    opt = optimal_parameter(model, TruthSpec([0.3, 0.7]))
    assert opt.theta0.tolist() == [2]
    assert opt.L0 == pytest.approx(-(0.3 * math.log(0.3) + 0.7 * math.log(0.7)), abs=1e-15)
    assert opt.D[2] == 0.0


def test_coherence_three_point():
    model = ParametricModel.bernoulli_grid([0.3, 0.5, 0.7])
    q = (0.4, 0.6)
    rep = coherence_check(model, TruthSpec(q), [0.01, 0.1])
    ratios = [(kl(q, p) - kl(q, (0.5, 0.5))) / kl((0.5, 0.5), p) for p in ((0.7, 0.3), (0.3, 0.7))]
    assert rep.best_A[0] == math.inf
    assert rep.best_A[1] == pytest.approx(min(ratios), rel=1e-12)


def test_coherence_realizable_is_one():
    model = ParametricModel.bernoulli_grid([0.3, 0.5, 0.7])
    rep = coherence_check(model, TruthSpec([0.5, 0.5]), [1.0])
    assert rep.best_A == [pytest.approx(1.0, abs=1e-12)]


def test_select_single_and_tie_break(two_point):
    data = [1, 0, 1, 1]
    assert select_model([two_point], data).winner == two_point.name
    wide = ParametricModel(two_point.alphabet, two_point.m, two_point.thetas, two_point.prior,
                           two_point.density, dim=2, name="wide")
    for order in ([two_point, wide], [wide, two_point]):
        rep = select_model(order, data, criterion="aic")
        assert rep.winner == two_point.name
        assert rep.per_model["wide"]["AIC"] - rep.per_model[two_point.name]["AIC"] == pytest.approx(0.25)
        w = select_model(order, data, criterion="waic")
        assert w.winner == two_point.name and w.tie_break[0]["decided_by"] == "dimension"
    assert rep.metadata["aic_uses_log_likelihood"]


def test_select_rejects_duplicates(two_point):
    with pytest.raises(StructuralError):
        select_model([two_point, two_point], [1])


def test_normal_mixture_degenerate_hessian():
    x = np.linspace(-5.0, 5.0, 51)
    q = mixture_density(x, 0.5, 0.0)
    h = finite_difference_hessian(mixture_loss(q, x), [0.5, 0.0])
    eig = np.linalg.eigvalsh(h)
    assert abs(eig[0]) <= 1e-6
    assert eig[1] > 0.1
    model = normal_mixture_model([0.0, 0.5, 1.0], [0.0, 1.0])
    assert model.dim == 2 and abs(model.density @ model.m - 1).max() <= 1e-12


def test_asymptotics_small_run_and_beta_scaling():
    model = uniform_bernoulli_grid(199)
    truth = TruthSpec([0.3, 0.7])
    a = stochastic_complexity_asymptotics(model, truth, [25, 50, 100, 200], 60, seed=3)
    b = stochastic_complexity_asymptotics(model.with_beta(2.0), truth, [25, 50, 100, 200], 60, seed=3)
    assert 0.2 <= a.lambda_hat <= 0.8
    assert 0.2 <= b.lambda_hat <= 0.8
    assert b.slope_log_n == pytest.approx(b.lambda_hat / 2)


def test_asymptotics_degenerate_prior_is_flat():
    model = ParametricModel.bernoulli_grid([0.3, 0.7], prior=[0.0, 1.0])
    rep = stochastic_complexity_asymptotics(model, TruthSpec([0.3, 0.7]), [10, 20, 40], 5, seed=0)
    assert abs(rep.lambda_hat) <= 1e-12


@given(st.integers(0, 10**6), st.lists(st.integers(0, 2), min_size=1, max_size=15))
def test_loss_identities_property(seed, data):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    truth = TruthSpec(rng.dirichlet(np.ones(3)) / model.m)
    losses = bayes_losses(model, data, truth)
    for value in losses.identity_residuals.values():
        assert abs(value) <= 1e-12
    assert losses.E_bg >= -1e-15
    v = functional_variance(model, data)
    assert v >= 0
    assert waic(model, data) == losses.L_bt + model.beta / len(data) * v
    np.testing.assert_allclose(escort_predictive(model, data) @ model.m, 1.0, atol=1e-10)


def exact_excess_curve(model, theta, ns):
    """E[F_n - n L_n] for a Bernoulli truth, summed exactly over the binomial count."""
    out = []
    for n in ns:
        k = np.arange(n + 1)
        vals = [-posterior_from_counts(model, np.array([n - j, j])).log_Z
                + j * math.log(theta) + (n - j) * math.log(1 - theta) for j in k]
        out.append(float(binom.pmf(k, n, theta) @ np.array(vals)))
    return np.array(out)


def test_asymptotics_means_match_exact_expectation():
    model = uniform_bernoulli_grid(199)
    ns = [10, 20, 40, 80]
    exact = exact_excess_curve(model, 0.7, ns)
    rep = stochastic_complexity_asymptotics(model, TruthSpec([0.3, 0.7]), ns, 400, seed=2)
    sd = rep.per_replication.std(axis=0, ddof=1) / math.sqrt(400)
    assert np.all(np.abs(np.array(rep.mean_excess) - exact) <= 4 * sd)
    slope = np.polyfit(np.log(ns), exact, 1)[0]
    assert 0.4 <= slope <= 0.55
