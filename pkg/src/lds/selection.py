"""Information criteria and singular-learning diagnostics for escort-Bayes models."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from ._parallel import derive_seed, map_ordered
from .errors import ConfigurationError, DegenerateModelError, DomainError, StructuralError
from .escort import (
    EscortPosterior,
    ParametricModel,
    escort_posterior,
    escort_predictive_state,
    posterior_from_counts,
)
from .measures import CentralState, DiscreteMeasure, kl_divergence, quantum_relative_entropy

OPTIMUM_TOL = 1e-12
SAME_DENSITY_TOL = 1e-10

# Carried in selection reports as metadata only; it never affects the ranking.
SELECTION_ADVISORY = (
    "information criteria rank candidates; treat the selected predictive state "
    "as a working choice to be checked against others, not as an absolute priority"
)


@dataclass(frozen=True, eq=False)
class TruthSpec:
    """Density ``q`` of the true central measure with respect to ``m``, plus a sampling seed."""

    q: np.ndarray
    seed: int = 0

    def __post_init__(self):
        q = np.array(self.q, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(q)) or np.any(q < 0):
            raise DomainError("truth density must be finite and nonnegative")
        q.setflags(write=False)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_json(cls, obj) -> "TruthSpec":
        if isinstance(obj, dict):
            return cls(obj["q"], int(obj.get("seed", 0)))
        return cls(obj)

    def to_json(self) -> dict:
        return {"q": self.q.tolist(), "seed": self.seed}

    def check(self, model: ParametricModel) -> "TruthSpec":
        if self.q.shape != (len(model.alphabet),):
            raise StructuralError("truth density needs one value per label")
        total = float(self.q @ model.m)
        if abs(total - 1.0) > 1e-10:
            raise DomainError(f"truth density integrates to {total!r} against m")
        if not np.array_equal((self.q > 0) & (model.m > 0), model.support):
            raise DomainError("truth support differs from the model's common support")
        return self

    def probabilities(self, model: ParametricModel) -> np.ndarray:
        p = self.q * model.m
        return p / p.sum()

    def state(self, model: ParametricModel) -> CentralState:
        return CentralState(DiscreteMeasure(model.alphabet, self.probabilities(model)))

    def sample(self, model: ParametricModel, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` label indices drawn from ``q m``."""
        return rng.choice(len(model.alphabet), size=n, p=self.probabilities(model))


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass
class BayesLosses:
    n: int
    L_bt: float
    _truth: dict | None = None

    def _need(self, key):
        if self._truth is None:
            raise ConfigurationError(f"{key} needs a truth specification")
        return self._truth[key]

    @property
    def E_bt(self) -> float:
        return self._need("E_bt")

    @property
    def L_bg(self) -> float:
        return self._need("L_bg")

    @property
    def E_bg(self) -> float:
        return self._need("E_bg")

    @property
    def E_bg_bridge(self) -> float:
        return self._need("E_bg_bridge")

    @property
    def identity_residuals(self) -> dict:
        return self._need("residuals")

    @property
    def has_truth(self) -> bool:
        return self._truth is not None

    def to_json(self) -> dict:
        out = {"n": self.n, "L_bt": self.L_bt}
        if self._truth is not None:
            out.update(self._truth)
        return out


def bayes_losses(model: ParametricModel, data, truth: TruthSpec | None = None) -> BayesLosses:
    """Training loss from data alone; generalization quantities when ``truth`` is given.

    The generalization error is computed twice, directly as ``D(q || p_pred)``
    and as the quantum relative entropy of the truth to the predictive state.
    """
    post = escort_posterior(model, data)
    n = post.n
    if n < 1:
        raise DomainError("losses need at least one observation")
    pred = post.predictive()
    counts = post.counts
    log_pred = _log(pred)
    with np.errstate(invalid="ignore"):
        l_bt = -float(np.where(counts > 0, counts * log_pred, 0.0).sum()) / n
    if truth is None:
        return BayesLosses(n, l_bt)
    truth.check(model)
    qm = truth.q * model.m
    live = qm > 0
    l_bg = -float(np.sum(qm[live] * log_pred[live]))
    e_bg = kl_divergence(truth.q, pred, weights=model.m)
    e_bg_bridge = quantum_relative_entropy(truth.state(model), escort_predictive_state(model, data))
    log_q = _log(truth.q)
    with np.errstate(invalid="ignore"):
        mean_log_q = float(np.where(counts > 0, counts * log_q, 0.0).sum()) / n
    e_bt = float(np.where(counts > 0, counts * (log_q - log_pred), 0.0).sum()) / n
    entropy_term = float(np.sum(qm[live] * log_q[live]))
    residuals = {
        "bridge": e_bg - e_bg_bridge,
        "generalization": e_bg - (l_bg + entropy_term),
        "training": e_bt - (l_bt + mean_log_q),
    }
    return BayesLosses(n, l_bt, {
        "E_bt": e_bt, "L_bg": l_bg, "E_bg": e_bg, "E_bg_bridge": e_bg_bridge, "residuals": residuals,
    })


def functional_variance(model: ParametricModel, data, posterior: EscortPosterior | None = None) -> float:
    """``V = sum_j Var_post[log p(x_j | theta)]``.

    ``posterior`` overrides the averaging weights (by default the escort
    posterior of ``data`` itself).
    """
    counts = model.counts(data)
    post = posterior if posterior is not None else posterior_from_counts(model, counts)
    w = post.weights
    live = w > 0
    total = 0.0
    for i in np.flatnonzero(counts):
        lp = model.log_density[live, i]
        if not np.all(np.isfinite(lp)):
            raise DomainError(f"datum {model.alphabet.labels[i]!r} has zero density under the posterior")
        centered = lp - w[live] @ lp
        total += counts[i] * float(w[live] @ (centered * centered))
    return total


def waic(model: ParametricModel, data) -> float:
    """``WAIC = L_bt + (beta / n) V``."""
    post = escort_posterior(model, data)
    if post.n < 1:
        raise DomainError("WAIC needs at least one observation")
    l_bt = bayes_losses(model, data).L_bt
    return l_bt + model.beta / post.n * functional_variance(model, data, post)


def grid_mle(model: ParametricModel, counts) -> int:
    """Index of the grid point maximizing the log-likelihood (first on ties)."""
    return int(np.argmax(model.log_likelihood(np.asarray(counts))))


def aic(model: ParametricModel, data, dim: int | None = None) -> float:
    """``-(1/n) sum_j log p(x_j | theta_mle) + d/n`` with the grid MLE and declared dimension."""
    counts = model.counts(data)
    n = int(counts.sum())
    if n < 1:
        raise DomainError("AIC needs at least one observation")
    ll = model.log_likelihood(counts)
    d = model.dim if dim is None else int(dim)
    return -float(ll[grid_mle(model, counts)]) / n + d / n


@dataclass(frozen=True)
class StandardFormExponents:
    """Charts ``(k, h)`` of a standard form: ``K(u) = u^{2k}`` and prior factor ``u^h``."""

    charts: tuple

    def __post_init__(self):
        charts = []
        for chart in self.charts:
            k, h = chart
            k = tuple(int(x) for x in k)
            h = tuple(int(x) for x in h)
            if len(k) != len(h) or not k:
                raise StructuralError("each chart needs k and h vectors of one common nonzero length")
            if min(k) < 0 or min(h) < 0:
                raise DomainError("standard-form exponents must be nonnegative integers")
            charts.append((k, h))
        if not charts:
            raise StructuralError("at least one chart is required")
        object.__setattr__(self, "charts", tuple(charts))

    @classmethod
    def single(cls, k, h) -> "StandardFormExponents":
        return cls(((k, h),))

    @classmethod
    def from_json(cls, obj) -> "StandardFormExponents":
        return cls(tuple((c["k"], c["h"]) for c in obj))


def learning_coefficient(exps: StandardFormExponents) -> tuple[Fraction, int]:
    """Exact ``(lambda, m)``: the smallest ``(h_j + 1) / (2 k_j)`` over charts and its multiplicity.

    Coordinates with ``k_j = 0`` are skipped; charts without any vanishing
    direction are skipped as well.
    """
    best, order = None, 0
    for k, h in exps.charts:
        ratios = [Fraction(hj + 1, 2 * kj) for kj, hj in zip(k, h) if kj > 0]
        if not ratios:
            continue
        lam = min(ratios)
        ties = sum(1 for r in ratios if r == lam)
        if best is None or lam < best:
            best, order = lam, ties
        elif lam == best:
            order = max(order, ties)
    if best is None:
        raise DegenerateModelError("every chart has k = 0; the divergence never vanishes")
    return best, order


@dataclass
class OptimalParameter:
    losses: np.ndarray
    L0: float
    theta0: np.ndarray
    p0: np.ndarray
    same_density: bool
    D: np.ndarray

    def D_n(self, model: ParametricModel, data) -> np.ndarray:
        """Empirical ``(1/n) sum_j log p0(x_j) / p(x_j | theta)`` per grid point."""
        counts = model.counts(data)
        n = int(counts.sum())
        if n < 1:
            raise DomainError("D_n needs at least one observation")
        f = _log(self.p0)[None, :] - model.log_density
        with np.errstate(invalid="ignore"):
            return np.where(counts[None, :] > 0, counts[None, :] * f, 0.0).sum(axis=1) / n

    def to_json(self) -> dict:
        return {
            "L0": self.L0,
            "theta0": self.theta0.tolist(),
            "p0": self.p0.tolist(),
            "same_density": self.same_density,
            "D": self.D.tolist(),
        }


def optimal_parameter(model: ParametricModel, truth: TruthSpec) -> OptimalParameter:
    """Grid minimizers of ``L(theta) = -sum_i q_i m_i log p(i|theta)``.

    ``same_density`` flags whether all minimizers share one density; a
    violation is reported, not raised.
    """
    truth.check(model)
    qm = truth.q * model.m
    live = qm > 0
    losses = -(model.log_density[:, live] @ qm[live])
    l0 = float(losses.min())
    theta0 = np.flatnonzero(losses - l0 <= OPTIMUM_TOL * max(1.0, abs(l0)))
    p0 = model.density[theta0[0]].copy()
    same = bool(np.all(np.abs(model.density[theta0] - p0[None, :]) <= SAME_DENSITY_TOL))
    psi = truth.state(model)
    s0 = quantum_relative_entropy(psi, model.state(int(theta0[0])))
    d = np.array([quantum_relative_entropy(psi, model.state(g)) - s0 for g in range(model.size)])
    return OptimalParameter(losses, l0, theta0, p0, same, d)


@dataclass
class CoherenceReport:
    eps_grid: list
    best_A: list
    coherent: bool

    def to_json(self) -> dict:
        return {"eps": self.eps_grid, "A_star": self.best_A, "coherent": self.coherent}


def coherence_check(model: ParametricModel, truth: TruthSpec, eps_grid: Sequence[float]) -> CoherenceReport:
    """Best constant ``A*(eps)`` with ``S(psi||w_theta) - S(psi||w_0) >= A S(w_0||w_theta)`` on ``Theta_eps``.

    ``+inf`` marks a neighborhood containing no point with ``S(w_0||w_theta) > 0``.
    """
    opt = optimal_parameter(model, truth)
    omega0 = model.state(int(opt.theta0[0]))
    div = np.array([quantum_relative_entropy(omega0, model.state(g)) for g in range(model.size)])
    best = []
    for eps in eps_grid:
        pick = (div <= eps) & (div > 0)
        best.append(float(np.min(opt.D[pick] / div[pick])) if pick.any() else math.inf)
    return CoherenceReport([float(e) for e in eps_grid], best, any(a > 0 for a in best))


def _hc1_ols(x: np.ndarray, y: np.ndarray):
    """OLS coefficients with HC1 heteroskedasticity-robust standard errors."""
    n, p = x.shape
    coef, *_ = np.linalg.lstsq(x, y, rcond=None)
    resid = y - x @ coef
    bread = np.linalg.pinv(x.T @ x)
    meat = (x * resid[:, None] ** 2).T @ x
    scale = n / (n - p) if n > p else math.nan
    cov = scale * bread @ meat @ bread
    return coef, np.sqrt(np.maximum(np.diag(cov), 0.0)), resid


@dataclass
class AsymptoticsReport:
    beta: float
    n_grid: list
    replications: int
    mean_excess: list
    lambda_hat: float
    lambda_se: float
    slope_log_n: float
    order_coef: float | None
    residuals: list
    lambda_expected: float | None = None
    m_expected: int | None = None
    per_replication: np.ndarray | None = field(default=None, repr=False)

    @property
    def z_score(self) -> float | None:
        if self.lambda_expected is None or not self.lambda_se > 0:
            return None
        return (self.lambda_hat - self.lambda_expected) / self.lambda_se

    def to_json(self) -> dict:
        return {
            "beta": self.beta,
            "n": self.n_grid,
            "replications": self.replications,
            "mean_F_minus_nL": self.mean_excess,
            "lambda_hat": self.lambda_hat,
            "lambda_se": self.lambda_se,
            "slope_log_n": self.slope_log_n,
            "loglog_coef": self.order_coef,
            "residual_F_R": self.residuals,
            "lambda_expected": self.lambda_expected,
            "m_expected": self.m_expected,
            "z_score": self.z_score,
        }


def stochastic_complexity_asymptotics(
    model: ParametricModel,
    truth: TruthSpec,
    n_grid: Sequence[int],
    replications: int,
    seed: int,
    lambda_expected: float | None = None,
    m_expected: int | None = None,
    workers: int | None = None,
) -> AsymptoticsReport:
    """Fit ``mean(F_n - n L_n) ~ c + lambda (1/beta) log n [- (m-1)(1/beta) log log n]``.

    Each replication draws one sample of size ``max(n_grid)`` from the truth
    and uses nested prefixes, so the curve in ``n`` is coherent within a
    replication.  ``L_n`` is the empirical loss of the optimal density ``p0``,
    which makes ``F_n - n L_n`` the normalized free energy.
    """
    n_grid = [int(n) for n in n_grid]
    if not n_grid or any(b <= a for a, b in zip(n_grid, n_grid[1:])) or n_grid[0] < 2:
        raise DomainError("n_grid must be increasing with entries >= 2")
    if replications < 2:
        raise DomainError("at least two replications are needed")
    opt = optimal_parameter(model, truth)
    log_p0 = _log(opt.p0)
    k = len(model.alphabet)
    beta = model.beta

    def replicate(r):
        rng = np.random.default_rng(derive_seed(seed, "asymptotics", r))
        sample = truth.sample(model, n_grid[-1], rng)
        out = []
        for n in n_grid:
            counts = np.bincount(sample[:n], minlength=k)
            log_z = posterior_from_counts(model, counts).log_Z
            with np.errstate(invalid="ignore"):
                n_l = -float(np.where(counts > 0, counts * log_p0, 0.0).sum())
            out.append(-log_z / beta - n_l)
        return out

    table = np.array(map_ordered(replicate, range(replications), workers))
    y = table.mean(axis=0)
    ns = np.array(n_grid, dtype=float)
    x_log = np.log(ns) / beta
    columns = [np.ones_like(ns), x_log]
    use_loglog = m_expected is not None and m_expected > 1
    if use_loglog:
        columns.append(-np.log(np.log(ns)) / beta)
    x = np.column_stack(columns)
    coef, se, _ = _hc1_ols(x, y)
    lam, lam_se = float(coef[1]), float(se[1])
    fitted = lam * x_log
    order = None
    if use_loglog:
        order = float(coef[2])
        fitted = fitted - order * np.log(np.log(ns)) / beta
    return AsymptoticsReport(
        beta, n_grid, int(replications), y.tolist(), lam, lam_se, lam / beta, order,
        (y - fitted).tolist(), lambda_expected, m_expected, table,
    )


def _rounded(x: float, digits: int = 12) -> float:
    return float(f"{x:.{digits}g}") if math.isfinite(x) else x


@dataclass
class CriteriaReport:
    criterion: str
    per_model: dict
    ranking: list
    tie_break: list
    metadata: dict

    @property
    def winner(self) -> str:
        return self.ranking[0]

    def to_json(self) -> dict:
        return {
            "criterion": self.criterion,
            "per_model": self.per_model,
            "ranking": self.ranking,
            "winner": self.winner,
            "tie_break": self.tie_break,
            "metadata": self.metadata,
        }


def criteria_for(model: ParametricModel, data, truth: TruthSpec | None = None) -> dict:
    losses = bayes_losses(model, data, truth)
    v = functional_variance(model, data)
    out = {
        "n": losses.n,
        "beta": model.beta,
        "dim": model.dim,
        "L_bt": losses.L_bt,
        "V": v,
        "WAIC": losses.L_bt + model.beta / losses.n * v,
        "AIC": aic(model, data),
    }
    if truth is not None:
        out.update(E_bt=losses.E_bt, L_bg=losses.L_bg, E_bg=losses.E_bg)
    return out


def select_model(candidates: Sequence[ParametricModel], data, criterion: str = "waic", truth=None) -> CriteriaReport:
    """Rank candidates by WAIC or AIC, ascending.

    Ties (criterion equal to 12 significant digits) go to the smaller declared
    dimension, then to the lexicographically smaller model name.
    """
    criterion = criterion.lower()
    if criterion not in ("waic", "aic"):
        raise StructuralError(f"criterion must be 'waic' or 'aic', got {criterion!r}")
    if not candidates:
        raise StructuralError("no candidate models to select from")
    names = [c.name for c in candidates]
    if len(set(names)) != len(names):
        raise StructuralError(f"candidate names must be unique: {names}")
    first = candidates[0]
    for c in candidates[1:]:
        if c.alphabet != first.alphabet or not np.array_equal(c.m, first.m):
            raise StructuralError(f"model {c.name!r} does not share the alphabet and m of {first.name!r}")
    per_model = {c.name: criteria_for(c, data, truth) for c in candidates}
    key_name = criterion.upper()
    keys = {c.name: (_rounded(per_model[c.name][key_name]), c.dim, c.name) for c in candidates}
    ranking = sorted(keys, key=keys.get)
    trace = []
    for a, b in zip(ranking, ranking[1:]):
        ka, kb = keys[a], keys[b]
        rule = "criterion" if ka[0] != kb[0] else ("dimension" if ka[1] != kb[1] else "name")
        trace.append({"above": a, "below": b, "decided_by": rule})
    meta = {"advisory": SELECTION_ADVISORY, "aic_uses_log_likelihood": True}
    return CriteriaReport(criterion, per_model, ranking, trace, meta)
