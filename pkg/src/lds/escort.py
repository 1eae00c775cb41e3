"""Escort (tempered) Bayesian inference on a finite parameter grid.

Densities are taken with respect to a reference measure ``m`` on the
alphabet; the central measure of the state ``omega_theta`` is ``p(.|theta) m``.
Parameter integrals are grid sums with quadrature weights folded into the
prior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from ._parallel import derive_seed, map_ordered
from .errors import CapacityError, ConfigurationError, DomainError, InferenceError, StructuralError
from .measures import Alphabet, CentralState, DiscreteMeasure

DENSITY_TOL = 1e-10
PRIOR_TOL = 1e-12
ENUMERATION_CAP = 10**6
_BLOCK = 1 << 15


def _log(x):
    with np.errstate(divide="ignore"):
        return np.log(x)


@dataclass(frozen=True, eq=False)
class ParametricModel:
    """Tabulated model ``{p(.|theta)}`` on a parameter grid.

    ``density[g, i]`` is ``p(label_i | theta_g)`` relative to ``m``; ``thetas``
    has one row per grid point; ``dim`` is the declared parameter dimension
    used by AIC and tie-breaking (defaults to the width of ``thetas``).
    """

    alphabet: Alphabet
    m: np.ndarray
    thetas: np.ndarray
    prior: np.ndarray
    density: np.ndarray
    beta: float = 1.0
    dim: int | None = None
    name: str = "model"
    log_density: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        alphabet = self.alphabet if isinstance(self.alphabet, Alphabet) else Alphabet(tuple(self.alphabet))
        k = len(alphabet)
        m = np.array(self.m, dtype=float, copy=True).reshape(-1)
        density = np.array(self.density, dtype=float, copy=True)
        prior = np.array(self.prior, dtype=float, copy=True).reshape(-1)
        thetas = np.array(self.thetas, dtype=float, copy=True)
        if thetas.ndim == 1:
            thetas = thetas[:, None]
        g = prior.shape[0]
        if m.shape != (k,) or density.shape != (g, k) or thetas.shape[0] != g or g == 0:
            raise StructuralError(
                f"shape mismatch: alphabet {k}, m {m.shape}, density {density.shape}, "
                f"prior {prior.shape}, thetas {thetas.shape}"
            )
        for name, arr in (("m", m), ("density", density), ("prior", prior)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise DomainError(f"{name} must be finite and nonnegative")
        if not math.isfinite(self.beta) or self.beta <= 0:
            raise DomainError(f"beta must lie in (0, inf), got {self.beta!r}")
        if abs(prior.sum() - 1.0) > PRIOR_TOL:
            raise DomainError(f"prior sums to {prior.sum()!r}, expected 1")
        totals = density @ m
        if np.any(np.abs(totals - 1.0) > DENSITY_TOL):
            bad = int(np.argmax(np.abs(totals - 1.0)))
            raise DomainError(f"density at grid point {bad} integrates to {totals[bad]!r} against m")
        pos = (density > 0) & (m > 0)
        if np.any(pos != pos[0]):
            raise DomainError("densities must share one support across the grid")
        dim = thetas.shape[1] if self.dim is None else int(self.dim)
        if dim < 0:
            raise DomainError("declared dimension must be nonnegative")
        for arr in (m, density, prior, thetas):
            arr.setflags(write=False)
        logp = _log(density)
        logp.setflags(write=False)
        object.__setattr__(self, "alphabet", alphabet)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "density", density)
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "log_density", logp)

    @classmethod
    def bernoulli_grid(cls, points: Sequence[float], prior=None, beta: float = 1.0, name: str = "bernoulli"):
        """Labels ``(0, 1)`` with counting reference measure and ``p(1|theta) = theta``."""
        t = np.asarray(points, dtype=float)
        if np.any((t < 0) | (t > 1)):
            raise DomainError("Bernoulli parameters must lie in [0, 1]")
        prior = np.full(t.size, 1.0 / t.size) if prior is None else np.asarray(prior, dtype=float)
        return cls(Alphabet((0, 1)), np.ones(2), t[:, None], prior, np.column_stack([1 - t, t]), beta, 1, name)

    @classmethod
    def from_json(cls, obj: dict) -> "ParametricModel":
        try:
            grid = obj["theta_grid"]
            return cls(
                Alphabet(tuple(obj["alphabet"])),
                np.asarray(obj["m"], dtype=float),
                np.array([np.atleast_1d(np.asarray(g["theta"], dtype=float)) for g in grid]),
                np.array([g["prior"] for g in grid], dtype=float),
                np.array([g["density"] for g in grid], dtype=float),
                float(obj.get("beta", 1.0)),
                obj.get("dim"),
                str(obj.get("name", "model")),
            )
        except (KeyError, TypeError) as exc:
            raise StructuralError(f"malformed model JSON: {exc}") from None

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "alphabet": list(self.alphabet.labels),
            "m": self.m.tolist(),
            "beta": self.beta,
            "dim": self.dim,
            "theta_grid": [
                {"theta": th.tolist(), "prior": float(w), "density": row.tolist()}
                for th, w, row in zip(self.thetas, self.prior, self.density)
            ],
        }

    @property
    def size(self) -> int:
        return self.prior.shape[0]

    @property
    def support(self) -> np.ndarray:
        return (self.density[0] > 0) & (self.m > 0)

    def with_beta(self, beta: float) -> "ParametricModel":
        return ParametricModel(self.alphabet, self.m, self.thetas, self.prior, self.density, beta, self.dim, self.name)

    def with_prior(self, prior) -> "ParametricModel":
        return ParametricModel(self.alphabet, self.m, self.thetas, prior, self.density, self.beta, self.dim, self.name)

    def state(self, g: int) -> CentralState:
        """``omega_theta`` for grid point ``g``: central measure ``p(.|theta_g) m``."""
        return _state_from_weights(self.alphabet, self.density[g] * self.m)

    def encode(self, data) -> np.ndarray:
        return self.alphabet.indices(data)

    def counts(self, data) -> np.ndarray:
        return self.alphabet.counts(data)

    def log_likelihood(self, counts: np.ndarray) -> np.ndarray:
        """``sum_j log p(x_j | theta_g)`` per grid point from label counts (``-inf`` off support)."""
        counts = np.asarray(counts)
        with np.errstate(invalid="ignore"):
            terms = np.where(counts > 0, counts * self.log_density, 0.0)
        return terms.sum(axis=-1)


def _state_from_weights(alphabet, weights) -> CentralState:
    # Densities are validated to 1e-10 against m; renormalize only if that slack shows.
    total = float(weights.sum())
    if abs(total - 1.0) > 1e-12:
        weights = weights / total
    return CentralState(DiscreteMeasure(alphabet, weights))


@dataclass(frozen=True, eq=False)
class EscortPosterior:
    """Grid posterior ``pi(theta) prod_j p(x_j|theta)^beta`` in log form.

    ``log_weights`` is shifted so its maximum is 0; ``log_Z`` is the log of
    the unshifted grid sum.
    """

    model: ParametricModel
    counts: np.ndarray
    log_weights: np.ndarray
    log_Z: float

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    @property
    def weights(self) -> np.ndarray:
        w = np.exp(self.log_weights)
        return w / w.sum()

    def mean(self, values) -> float:
        return float(self.weights @ np.asarray(values, dtype=float))

    def predictive(self) -> np.ndarray:
        return self.weights @ self.model.density


def posterior_from_counts(model: ParametricModel, counts) -> EscortPosterior:
    counts = np.asarray(counts, dtype=np.int64)
    if counts.shape != (len(model.alphabet),) or np.any(counts < 0):
        raise StructuralError("counts must be nonnegative, one per label")
    with np.errstate(divide="ignore"):
        raw = _log(model.prior) + model.beta * model.log_likelihood(counts)
    top = raw.max()
    if not np.isfinite(top):
        raise InferenceError("posterior has zero total mass: the data lie outside every density's support")
    shifted = raw - top
    log_z = float(top + logsumexp(shifted))
    counts.setflags(write=False)
    shifted.setflags(write=False)
    return EscortPosterior(model, counts, shifted, log_z)


def escort_posterior(model: ParametricModel, data) -> EscortPosterior:
    """Posterior weights proportional to ``pi(theta) prod_j p(x_j|theta)^beta``."""
    return posterior_from_counts(model, model.counts(data))


def escort_predictive(model: ParametricModel, data) -> np.ndarray:
    """Escort predictive density ``<p(x|theta)>`` with respect to ``m``."""
    return escort_posterior(model, data).predictive()


def escort_predictive_state(model: ParametricModel, data) -> CentralState:
    """Barycenter whose central measure is ``sum_theta w(theta) p(i|theta) m_i``."""
    post = escort_posterior(model, data)
    return _state_from_weights(model.alphabet, (post.weights @ model.density) * model.m)


def posterior_mean(model: ParametricModel, data, G) -> float:
    """``<G(theta)>`` under the escort posterior; ``G`` is a callable on theta rows or a grid array."""
    post = escort_posterior(model, data)
    if callable(G):
        values = np.array([float(G(th[0] if th.size == 1 else th)) for th in model.thetas])
    else:
        values = np.asarray(G, dtype=float)
        if values.shape != (model.size,):
            raise StructuralError(f"G must have one value per grid point ({model.size})")
    return post.mean(values)


@dataclass(frozen=True)
class PartitionFunction:
    beta: float
    log_Z: float
    _log_Z0: float | None = None

    @property
    def Z(self) -> float:
        return math.exp(self.log_Z)

    @property
    def F(self) -> float:
        return -self.log_Z / self.beta

    @property
    def log_Z0(self) -> float:
        if self._log_Z0 is None:
            raise ConfigurationError("normalized partition function needs an optimal density p0")
        return self._log_Z0

    @property
    def F0(self) -> float:
        return -self.log_Z0 / self.beta

    @property
    def has_normalized(self) -> bool:
        return self._log_Z0 is not None

    def to_json(self) -> dict:
        out = {"log_Z": self.log_Z, "F": self.F}
        if self.has_normalized:
            out.update(log_Z0=self.log_Z0, F0=self.F0)
        return out


def partition_function(model: ParametricModel, data, p0=None) -> PartitionFunction:
    """``Z_n``, ``F_n = -(1/beta) log Z_n`` and, given ``p0``, ``Z_n^0 = Z_n / prod p0^beta``."""
    counts = model.counts(data)
    log_z = escort_posterior(model, data).log_Z if counts.sum() else 0.0
    log_z0 = None
    if p0 is not None:
        p0 = np.asarray(p0, dtype=float)
        if p0.shape != (len(model.alphabet),):
            raise StructuralError("p0 must have one value per label")
        terms = np.where(counts > 0, counts * _log(p0), 0.0)
        log_z0 = log_z - model.beta * float(terms.sum())
    return PartitionFunction(model.beta, float(log_z), log_z0)


def enumerate_tuples(k: int, n: int, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """All ``k**n`` index tuples in lexicographic order (rows)."""
    if k**n > cap:
        raise CapacityError(f"{k}^{n} = {k**n} data tuples exceed the enumeration cap {cap}")
    if n == 0:
        return np.zeros((1, 0), dtype=np.intp)
    grids = np.indices((k,) * n).reshape(n, -1).T
    return np.ascontiguousarray(grids, dtype=np.intp)


def _tuple_counts(tuples: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((tuples.shape[0], k), dtype=np.int64)
    for j in range(tuples.shape[1]):
        np.add.at(out, (np.arange(tuples.shape[0]), tuples[:, j]), 1)
    return out


def _loglik_table(model: ParametricModel, counts: np.ndarray) -> np.ndarray:
    """``sum_j log p(x_j|theta)`` as a (grid, tuple) array."""
    out = np.zeros((model.size, counts.shape[0]))
    for i in range(counts.shape[1]):
        c = counts[:, i]
        hit = c > 0
        if hit.any():
            out[:, hit] += c[hit][None, :] * model.log_density[:, i][:, None]
    return out


def _log_tuple_weights(model: ParametricModel, counts: np.ndarray) -> np.ndarray:
    """``log[pi(theta) prod_j p(x_j|theta)^beta m(x_j)]`` as a (grid, tuple) array."""
    with np.errstate(invalid="ignore"):
        lm = np.where(counts > 0, counts * _log(model.m)[None, :], 0.0).sum(axis=1)
    return _log(model.prior)[:, None] + model.beta * _loglik_table(model, counts) + lm[None, :]


def escort_candidate(model: ParametricModel, n: int) -> np.ndarray:
    """Escort predictive densities for every data tuple, rows in enumeration order."""
    k = len(model.alphabet)
    tuples = enumerate_tuples(k, n)
    out = np.empty((tuples.shape[0], k))
    for lo in range(0, tuples.shape[0], _BLOCK):
        counts = _tuple_counts(tuples[lo:lo + _BLOCK], k)
        raw = _log(model.prior)[:, None] + model.beta * _loglik_table(model, counts)
        w = np.exp(raw - raw.max(axis=0, keepdims=True))
        w /= w.sum(axis=0, keepdims=True)
        out[lo:lo + _BLOCK] = w.T @ model.density
    return out


def _candidate_table(model, candidate, tuples) -> np.ndarray:
    if callable(candidate):
        labels = model.alphabet.labels
        rows = [np.asarray(candidate(tuple(labels[i] for i in t)), dtype=float) for t in tuples]
        table = np.vstack(rows) if rows else np.zeros((0, len(labels)))
    else:
        table = np.asarray(candidate, dtype=float)
    if table.shape != (tuples.shape[0], len(model.alphabet)):
        raise StructuralError(f"candidate table must have shape {(tuples.shape[0], len(model.alphabet))}")
    return table


@dataclass(frozen=True)
class RiskValue:
    risk: float
    normalizer: float

    @property
    def normalized(self) -> float:
        return self.risk / self.normalizer


def _risk(model: ParametricModel, table: np.ndarray, n: int, workers=None) -> RiskValue:
    k = len(model.alphabet)
    tuples = enumerate_tuples(k, n)
    mass = model.density * model.m
    support = model.support
    with np.errstate(invalid="ignore"):
        neg_ent = np.where(mass > 0, mass * model.log_density, 0.0).sum(axis=1)

    def block(bounds):
        lo, hi = bounds
        counts = _tuple_counts(tuples[lo:hi], k)
        w = np.exp(_log_tuple_weights(model, counts))
        r = table[lo:hi]
        bad = np.any(r[:, support] <= 0, axis=1)
        log_r = np.where(r > 0, _log(np.where(r > 0, r, 1.0)), 0.0)
        div = neg_ent[:, None] - mass @ log_r.T
        live = w > 0
        if np.any(live & bad[None, :]):
            return math.inf, math.fsum(w.ravel())
        return math.fsum((w[live] * div[live]).ravel()), math.fsum(w.ravel())

    edges = list(range(0, tuples.shape[0], _BLOCK)) + [tuples.shape[0]]
    parts = map_ordered(block, list(zip(edges[:-1], edges[1:])), workers)
    return RiskValue(math.fsum(p[0] for p in parts), math.fsum(p[1] for p in parts))


def classical_risk(model: ParametricModel, candidate, n: int, normalize: bool = False, workers=None) -> float:
    """Risk of a predictive map, summed exactly over all ``k**n`` data tuples.

    The escort weighting ``prod_j p(x_j|theta)^beta m(x_j)`` is left
    unnormalized unless ``normalize`` is set.  ``candidate`` is a callable
    from a label tuple to a density relative to ``m``, or a table with one
    row per tuple in :func:`enumerate_tuples` order.
    """
    table = _candidate_table(model, candidate, enumerate_tuples(len(model.alphabet), n))
    value = _risk(model, table, n, workers)
    return value.normalized if normalize else value.risk


def _states_to_densities(model, states) -> np.ndarray:
    w = np.asarray(states, dtype=float)
    dens = np.zeros_like(w)
    pos = model.m > 0
    dens[:, pos] = w[:, pos] / model.m[pos]
    # Mass where m vanishes breaks domination by m; mark the row as unusable.
    leak = np.any(w[:, ~pos] > 0, axis=1)
    dens[leak] = 0.0
    return dens


def quantum_risk(model: ParametricModel, candidate, n: int, workers=None) -> float:
    """Normalized state risk ``T^n``: relative entropies of states divided by the escort normalizer.

    ``candidate`` maps a label tuple to a :class:`CentralState` (or weights),
    or is a table of central-measure weights per tuple.
    """
    tuples = enumerate_tuples(len(model.alphabet), n)
    if callable(candidate):
        labels = model.alphabet.labels

        def as_weights(t):
            s = candidate(tuple(labels[i] for i in t))
            return s.weights if isinstance(s, CentralState) else np.asarray(s, dtype=float)

        states = np.vstack([as_weights(t) for t in tuples])
    else:
        states = np.asarray(candidate, dtype=float)
    table = _states_to_densities(model, states)
    return _risk(model, table, n, workers).normalized


@dataclass
class RiskMinimalityReport:
    n: int
    perturbation_count: int
    escort_risk: float
    escort_state_risk: float
    min_margin: float
    min_state_margin: float
    tolerance: float = 1e-12

    @property
    def ok(self) -> bool:
        return self.min_margin >= -self.tolerance and self.min_state_margin >= -self.tolerance

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "perturbation_count": self.perturbation_count,
            "escort_risk": self.escort_risk,
            "escort_state_risk": self.escort_state_risk,
            "min_margin": self.min_margin,
            "min_state_margin": self.min_state_margin,
            "ok": self.ok,
        }


def perturbed_candidates(model: ParametricModel, n: int, count: int, seed: int):
    """Random predictive maps mixing the escort with Dirichlet(1) densities, mixing weight ~ U[0,1]."""
    escort = escort_candidate(model, n)
    support = model.support
    for c in range(count):
        rng = np.random.default_rng(derive_seed(seed, "risk", n, c))
        w = rng.uniform()
        noise = np.zeros_like(escort)
        noise[:, support] = rng.dirichlet(np.ones(int(support.sum())), size=escort.shape[0]) / model.m[support]
        yield (1.0 - w) * escort + w * noise


def risk_minimality_check(model: ParametricModel, n: int, perturbation_count: int, seed: int = 0, workers=None):
    """Escort risk against perturbed candidates; margins are ``risk(candidate) - risk(escort)``."""
    escort = escort_candidate(model, n)
    base = _risk(model, escort, n, workers)
    margin = state_margin = math.inf
    for cand in perturbed_candidates(model, n, perturbation_count, seed):
        value = _risk(model, cand, n, workers)
        margin = min(margin, value.risk - base.risk)
        state_margin = min(state_margin, value.normalized - base.normalized)
    return RiskMinimalityReport(n, perturbation_count, base.risk, base.normalized, margin, state_margin)

