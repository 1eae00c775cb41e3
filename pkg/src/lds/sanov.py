"""Sanov-level large deviations for empirical measures of factor-state draws.

``L_n`` is the empirical measure of ``n`` i.i.d. labels drawn from a central
measure ``mu``.  Its rate function is ``D(. || mu)``, which for central
measures is also the quantum relative entropy of the barycenters.  Constraint
sets are predicates on the probability simplex; open and closed variants are
strict and weak inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, softmax

from ._parallel import chunk_generators, derive_seed, map_ordered
from .errors import CapacityError, DomainError, NumericalError, StructuralError
from .measures import (
    Alphabet,
    CentralState,
    DiscreteMeasure,
    kl_divergence,
    quantum_relative_entropy,
)

COMPOSITION_CAP = 2 * 10**6
_NEAR = 1e-9

# Region codes returned by the constraint sets' _region() helpers.
ALL, NONE = "all", "none"


@dataclass(frozen=True)
class EmpiricalMeasure:
    alphabet: Alphabet
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if c.shape[0] != len(self.alphabet) or np.any(c < 0):
            raise StructuralError("counts must be nonnegative, one per label")
        if c.sum() < 1:
            raise DomainError("an empirical measure needs at least one sample")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def measure(self) -> DiscreteMeasure:
        return DiscreteMeasure(self.alphabet, self.counts / self.n)


def empirical_measure(samples: Sequence, alphabet) -> EmpiricalMeasure:
    """Tally a label sequence into an empirical measure ``L_n``."""
    if not isinstance(alphabet, Alphabet):
        alphabet = Alphabet(tuple(alphabet))
    samples = list(samples)
    if not samples:
        raise DomainError("empirical measure of an empty sample is undefined")
    return EmpiricalMeasure(alphabet, alphabet.counts(samples))


@lru_cache(maxsize=64)
def compositions(n: int, k: int) -> np.ndarray:
    """All nonnegative integer vectors of length ``k`` summing to ``n`` (lexicographic)."""
    if k == 1:
        out = np.array([[n]], dtype=np.int64)
    else:
        blocks = []
        for first in range(n + 1):
            rest = compositions(n - first, k - 1)
            blocks.append(np.column_stack([np.full(rest.shape[0], first, dtype=np.int64), rest]))
        out = np.vstack(blocks)
    out.setflags(write=False)
    return out


def composition_count(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)


def _exact_mean(row, n, values) -> float:
    return float(sum(Fraction(int(c)) * Fraction(float(v)) for c, v in zip(row, values)) / n)


class _ConstraintSet:
    kind = ""

    def _region(self, region: str):
        raise NotImplementedError

    def contains_weights(self, weights, region: str = "set") -> np.ndarray:
        raise NotImplementedError

    def contains_counts(self, counts, n: int, region: str = "set") -> np.ndarray:
        raise NotImplementedError

    def contains(self, nu, region: str = "set") -> bool:
        w = nu.weights if isinstance(nu, DiscreteMeasure) else np.asarray(nu, dtype=float)
        return bool(self.contains_weights(w[None, :], region)[0])


@dataclass(frozen=True, eq=False)
class MomentHalfSpace(_ConstraintSet):
    """``{nu : sum_i nu_i f_i >= c}`` (``> c`` when ``strict``)."""

    f: np.ndarray
    c: float
    strict: bool = False
    kind = "moment"

    def __post_init__(self):
        f = np.array(self.f, dtype=float, copy=True).reshape(-1)
        if not np.all(np.isfinite(f)) or not math.isfinite(self.c):
            raise DomainError("moment constraint must have finite f and c")
        f.setflags(write=False)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "c", float(self.c))

    def _region(self, region):
        fmin, fmax, c = float(self.f.min()), float(self.f.max()), self.c
        if region == "set":
            return ("gt" if self.strict else "ge"), c
        if region == "closure":
            if not self.strict:
                return "ge", c
            if c >= fmax:
                return NONE, c
            return (ALL, c) if c < fmin else ("ge", c)
        if region == "interior":
            if self.strict:
                return "gt", c
            if c > fmax:
                return NONE, c
            return (ALL, c) if c <= fmin else ("gt", c)
        raise StructuralError(f"unknown region {region!r}")

    @staticmethod
    def _compare(op, vals, c):
        if op == ALL:
            return np.ones(vals.shape, bool)
        if op == NONE:
            return np.zeros(vals.shape, bool)
        return vals >= c if op == "ge" else vals > c

    def contains_weights(self, weights, region="set"):
        op, c = self._region(region)
        return self._compare(op, np.asarray(weights, float) @ self.f, c)

    def contains_counts(self, counts, n, region="set"):
        op, c = self._region(region)
        counts = np.asarray(counts)
        vals = (counts @ self.f) / n
        near = np.flatnonzero(np.abs(vals - c) <= _NEAR * (1.0 + abs(c)))
        if near.size:
            vals = vals.copy()
            for i in near:
                vals[i] = _exact_mean(counts[i], n, self.f)
        return self._compare(op, vals, c)

    def to_json(self):
        return {"kind": "moment", "f": [float(x) for x in self.f], "c": self.c, "strict": self.strict}


@dataclass(frozen=True, eq=False)
class TVBall(_ConstraintSet):
    """``{nu : TV(nu, center) <= radius}`` (``<`` when ``strict``), TV = half the l1 distance."""

    center: np.ndarray
    radius: float
    strict: bool = False
    kind = "tv_ball"

    def __post_init__(self):
        c = np.array(self.center, dtype=float, copy=True).reshape(-1)
        if np.any(c < 0) or abs(c.sum() - 1.0) > 1e-12:
            raise DomainError("TV-ball center must be a probability vector")
        if not self.radius >= 0:
            raise DomainError("TV-ball radius must be nonnegative")
        c.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def covering_radius(self) -> float:
        """Largest TV distance from the center to any point of the simplex."""
        return 1.0 - float(self.center.min())

    def _region(self, region):
        r, cover = self.radius, self.covering_radius
        if region == "set":
            return ("lt" if self.strict else "le"), r
        if region == "closure":
            if not self.strict:
                return "le", r
            if r <= 0:
                return NONE, r
            return (ALL, r) if r > cover else ("le", r)
        if region == "interior":
            if self.strict:
                return "lt", r
            if r >= cover:
                return ALL, r
            return (NONE, r) if r == 0 else ("lt", r)
        raise StructuralError(f"unknown region {region!r}")

    @staticmethod
    def _compare(op, tv, r):
        if op == ALL:
            return np.ones(tv.shape, bool)
        if op == NONE:
            return np.zeros(tv.shape, bool)
        return tv <= r if op == "le" else tv < r

    def contains_weights(self, weights, region="set"):
        op, r = self._region(region)
        tv = 0.5 * np.abs(np.asarray(weights, float) - self.center[None, :]).sum(axis=1)
        return self._compare(op, tv, r)

    def contains_counts(self, counts, n, region="set"):
        op, r = self._region(region)
        counts = np.asarray(counts)
        tv = 0.5 * np.abs(counts / n - self.center[None, :]).sum(axis=1)
        near = np.flatnonzero(np.abs(tv - r) <= _NEAR * (1.0 + r))
        if near.size:
            tv = tv.copy()
            center = [Fraction(float(x)) for x in self.center]
            for i in near:
                tv[i] = float(sum(abs(Fraction(int(c), n) - z) for c, z in zip(counts[i], center)) / 2)
        return self._compare(op, tv, r)

    def to_json(self):
        return {"kind": "tv_ball", "center": [float(x) for x in self.center],
                "radius": self.radius, "strict": self.strict}


@dataclass(frozen=True, eq=False)
class ExplicitMeasures(_ConstraintSet):
    """A finite list of measures (rows of ``points``)."""

    points: np.ndarray
    kind = "explicit"

    def __post_init__(self):
        p = np.array(self.points, dtype=float, copy=True)
        if p.ndim != 2 or p.shape[0] == 0:
            raise StructuralError("explicit constraint needs a non-empty 2-D array of measures")
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise DomainError("explicit measures must be probability vectors")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @classmethod
    def from_counts(cls, counts, n: int) -> "ExplicitMeasures":
        return cls(np.asarray(counts, dtype=float) / n)

    def _region(self, region):
        if region in ("set", "closure"):
            return "in"
        if region == "interior":
            # A finite set has empty interior in any simplex of dimension >= 1.
            return ALL if self.points.shape[1] == 1 else NONE
        raise StructuralError(f"unknown region {region!r}")

    def _member(self, w):
        return (w[:, None, :] == self.points[None, :, :]).all(axis=2).any(axis=1)

    def contains_weights(self, weights, region="set"):
        w = np.asarray(weights, float)
        op = self._region(region)
        if op == ALL:
            return np.ones(w.shape[0], bool)
        if op == NONE:
            return np.zeros(w.shape[0], bool)
        return self._member(w)

    def contains_counts(self, counts, n, region="set"):
        return self.contains_weights(np.asarray(counts) / n, region)

    def to_json(self):
        return {"kind": "explicit", "measures": [[float(x) for x in row] for row in self.points]}


MeasureConstraintSet = MomentHalfSpace | TVBall | ExplicitMeasures


def constraint_from_json(obj: dict) -> _ConstraintSet:
    """Build a constraint set from its JSON form.

    ``{"kind": "moment", "f": [...], "c": x, "strict": false}``,
    ``{"kind": "tv_ball", "center": [...], "radius": r, "strict": false}`` or
    ``{"kind": "explicit", "measures": [[...], ...]}``.
    """
    kind = obj.get("kind")
    if kind == "moment":
        return MomentHalfSpace(obj["f"], obj["c"], bool(obj.get("strict", False)))
    if kind == "tv_ball":
        return TVBall(obj["center"], obj["radius"], bool(obj.get("strict", False)))
    if kind == "explicit":
        return ExplicitMeasures(obj["measures"])
    raise StructuralError(f"unknown constraint kind {kind!r}")


@dataclass(frozen=True)
class SanovRate:
    value: float
    argmin: DiscreteMeasure | None
    attained: bool = True
    tilt: float | None = None

    def __iter__(self):
        return iter((self.value, self.argmin))


def _embed(alphabet, support, sub_weights) -> DiscreteMeasure:
    w = np.zeros(len(alphabet))
    w[support] = sub_weights
    return DiscreteMeasure(alphabet, w / w.sum())


def _moment_rate(gamma: MomentHalfSpace, mu: DiscreteMeasure, region: str) -> SanovRate:
    op, c = gamma._region(region)
    if op == NONE:
        return SanovRate(math.inf, None)
    if op == ALL:
        return SanovRate(0.0, mu)
    support = mu.support
    f, m = gamma.f[support], mu.weights[support]
    mean = float(m @ f)
    if mean > c or (mean == c and op == "ge"):
        return SanovRate(0.0, mu)
    fmax = float(f.max())
    if c > fmax or (c == fmax and op == "gt"):
        return SanovRate(math.inf, None)
    attained = op == "ge"
    if mean == c:
        return SanovRate(0.0, mu, attained=False)
    if c == fmax:
        top = f == fmax
        nu = _embed(mu.alphabet, np.flatnonzero(support)[top], m[top])
        return SanovRate(-math.log(float(m[top].sum())), nu, attained, math.inf)

    log_m = np.log(m)

    def excess(t):
        return float(softmax(log_m + t * f) @ f) - c

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2.0
        if hi > 1e300:
            raise NumericalError("could not bracket the tilting parameter", c=c)
    t = brentq(excess, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    nu_s = softmax(log_m + t * f)
    nu = _embed(mu.alphabet, np.flatnonzero(support), nu_s)
    return SanovRate(kl_divergence(nu_s, m), nu, attained, t)


def _clip_solution(center, m, log_ratio):
    """Normalized ``clip(center, a m, e^{log_ratio} a m)``, solving for ``a``."""
    ratio = math.exp(log_ratio)

    def mass(log_a):
        a = math.exp(log_a)
        return float(np.clip(center, a * m, ratio * a * m).sum()) - 1.0

    lo, hi = -1.0, 1.0
    while mass(lo) > 0:
        lo *= 2.0
    while mass(hi) < 0:
        hi *= 2.0
    log_a = brentq(mass, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    a = math.exp(log_a)
    nu = np.clip(center, a * m, ratio * a * m)
    return nu / nu.sum()


def _tv_rate(gamma: TVBall, mu: DiscreteMeasure, region: str) -> SanovRate:
    op, r = gamma._region(region)
    if op == NONE:
        return SanovRate(math.inf, None)
    if op == ALL or gamma.contains(mu, region):
        return SanovRate(0.0, mu, attained=op == ALL or gamma.contains(mu, region))
    support = mu.support
    m, center = mu.weights[support], gamma.center[support]
    outside = float(gamma.center[~support].sum())
    # Closest reachable TV is the center's mass off the support.
    if outside > r or (outside == r and op == "lt"):
        return SanovRate(math.inf, None)
    attained = op == "le"

    # KKT: the I-projection is clip(center, a m, b m) with b/a = exp(lambda) set by the radius.
    def tv(nu_s):
        return 0.5 * (float(np.abs(nu_s - center).sum()) + outside)

    def gap(log_ratio):
        return tv(_clip_solution(center, m, log_ratio)) - r

    hi = 1.0
    while gap(hi) > 0 and hi < 512.0:
        hi *= 2.0
    if gap(hi) > 0:
        # Radius equals the minimal reachable distance: the limiting projection.
        def mass(log_a):
            return float(np.maximum(center, math.exp(log_a) * m).sum()) - 1.0

        if outside == 0.0:
            nu_s = center.copy()
        else:
            log_a = brentq(mass, -700.0, 700.0, xtol=1e-15, maxiter=500)
            nu_s = np.maximum(center, math.exp(log_a) * m)
            nu_s /= nu_s.sum()
    else:
        log_ratio = brentq(gap, 0.0, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500)
        nu_s = _clip_solution(center, m, log_ratio)
    nu = _embed(mu.alphabet, np.flatnonzero(support), nu_s)
    return SanovRate(kl_divergence(nu_s, m), nu, attained)


def _explicit_rate(gamma: ExplicitMeasures, mu: DiscreteMeasure, region: str) -> SanovRate:
    op = gamma._region(region)
    if op == NONE:
        return SanovRate(math.inf, None)
    if op == ALL:
        return SanovRate(0.0, mu)
    best, arg = math.inf, None
    for row in gamma.points:
        d = kl_divergence(row, mu.weights)
        if d < best:
            best, arg = d, row
    if arg is None:
        return SanovRate(math.inf, None)
    return SanovRate(best, DiscreteMeasure(mu.alphabet, arg))


def sanov_rate(gamma, mu: DiscreteMeasure, closure: bool = True) -> SanovRate:
    """``inf {D(nu || mu) : nu in closure (or interior) of gamma, nu << mu}`` and a minimizer.

    Infeasible sets give ``+inf``.  ``attained`` is False when the infimum over
    an open set is only approached.
    """
    if mu.weights.shape[0] != _dim(gamma):
        raise StructuralError("constraint set and measure have different alphabet sizes")
    region = "closure" if closure else "interior"
    if isinstance(gamma, MomentHalfSpace):
        return _moment_rate(gamma, mu, region)
    if isinstance(gamma, TVBall):
        return _tv_rate(gamma, mu, region)
    if isinstance(gamma, ExplicitMeasures):
        return _explicit_rate(gamma, mu, region)
    raise StructuralError(f"unsupported constraint set {gamma!r}")


def _dim(gamma) -> int:
    if isinstance(gamma, MomentHalfSpace):
        return gamma.f.shape[0]
    if isinstance(gamma, TVBall):
        return gamma.center.shape[0]
    return gamma.points.shape[1]


def log_multinomial_pmf(counts: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Row-wise log multinomial probabilities; ``-inf`` where a zero-probability label is counted."""
    counts = np.asarray(counts)
    n = counts.sum(axis=1)
    log_p = np.where(probs > 0, np.log(np.where(probs > 0, probs, 1.0)), 0.0)
    blocked = (counts[:, probs == 0] > 0).any(axis=1)
    out = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1) + counts @ log_p
    out[blocked] = -np.inf
    return out


def exact_empirical_prob(mu: DiscreteMeasure, n: int, gamma, cap: int = COMPOSITION_CAP) -> float:
    """Exact ``P(L_n in gamma)`` summed over type classes."""
    k = len(mu)
    if n < 1:
        raise DomainError("n must be at least 1")
    if composition_count(n, k) > cap:
        raise CapacityError(
            f"{composition_count(n, k)} type classes exceed the cap {cap}; use mc_empirical_prob"
        )
    types = compositions(n, k)
    inside = gamma.contains_counts(types, n, "set")
    if not inside.any():
        return 0.0
    lp = log_multinomial_pmf(types[inside], mu.weights)
    return math.fsum(np.exp(lp[np.isfinite(lp)]))


def mc_empirical_prob(
    mu: DiscreteMeasure,
    n: int,
    gamma,
    replications: int,
    seed: int,
    *,
    chunk: int = 1 << 16,
    workers: int | None = None,
):
    """Monte Carlo ``P(L_n in gamma)`` with binomial standard error."""
    from .cramer import TailEstimate

    replications = int(replications)
    if replications < 1:
        raise DomainError("replications must be at least 1")

    def run(task):
        rng, size = task
        counts = rng.multinomial(n, mu.weights, size=size)
        return int(gamma.contains_counts(counts, n, "set").sum())

    hits = sum(map_ordered(run, chunk_generators(seed, replications, chunk), workers))
    est = hits / replications
    return TailEstimate(est, math.sqrt(est * (1.0 - est) / replications), replications)


@dataclass
class SanovRow:
    n: int
    exact: float | None
    mc: object
    log_rate: float
    types_bound: float
    upper_ok: bool
    lower_bound: float
    lower_ok: bool

    def to_json(self):
        return {
            "n": self.n,
            "exact": self.exact,
            "mc": None if self.mc is None else self.mc.to_json(),
            "log_rate": self.log_rate,
            "types_bound": self.types_bound,
            "upper_ok": self.upper_ok,
            "lower_bound": self.lower_bound,
            "lower_ok": self.lower_ok,
            "bound_ok": self.upper_ok,
        }


@dataclass
class SanovReport:
    mode: str
    rate_closure: SanovRate
    rate_interior: SanovRate
    slack_constant: float
    rows: list[SanovRow]
    bridge: dict | None

    @property
    def upper_ok(self):
        return all(r.upper_ok for r in self.rows)

    @property
    def lower_ok(self):
        return bool(self.rows) and max(self.rows, key=lambda r: r.n).lower_ok

    @property
    def ok(self):
        bridge_ok = self.bridge is None or self.bridge["equal"]
        return self.upper_ok and self.lower_ok and bridge_ok

    def to_json(self):
        return {
            "mode": self.mode,
            "rate_at_inf": {"closure": self.rate_closure.value, "interior": self.rate_interior.value},
            "minimizer": None if self.rate_closure.argmin is None else self.rate_closure.argmin.to_json(),
            "slack_constant": self.slack_constant,
            "per_n": [r.to_json() for r in self.rows],
            "bridge": self.bridge,
            "upper_ok": self.upper_ok,
            "lower_ok": self.lower_ok,
            "bound_ok": self.ok,
        }


def sanov_bound_check(
    mu: DiscreteMeasure,
    gamma,
    n_list: Sequence[int],
    mode: str = "central",
    *,
    slack_constant: float = 1.0,
    replications: int | None = None,
    seed: int = 0,
    cap: int = COMPOSITION_CAP,
) -> SanovReport:
    """Check ``(1/n) log P(L_n in gamma)`` against the Sanov sandwich at finite n.

    Upper side, non-asymptotic (method of types):
    ``Q_n <= (n+1)^k exp(-n inf_closure D)``.  Lower side, asymptotic, at
    ``-inf_interior D - C log(n)/n``.  In ``central`` mode ``mu`` is a central
    measure and the minimizer's relative entropy is also reported as the
    quantum relative entropy of its barycenter; in ``generic`` mode ``mu`` is
    any barycentric measure and only ``D`` is reported.
    """
    if mode not in ("central", "generic"):
        raise StructuralError(f"mode must be 'central' or 'generic', got {mode!r}")
    k = len(mu)
    closure = sanov_rate(gamma, mu, closure=True)
    interior = sanov_rate(gamma, mu, closure=False)
    rows = []
    for n in sorted(int(x) for x in n_list):
        try:
            exact = exact_empirical_prob(mu, n, gamma, cap)
        except CapacityError:
            exact = None
        mc = None
        if replications:
            mc = mc_empirical_prob(mu, n, gamma, replications, derive_seed(seed, "sanov", n))
        if exact is None and mc is None:
            raise CapacityError(f"no exact probability at n={n}; pass replications for Monte Carlo")
        q = exact if exact is not None else mc.estimate
        log_rate = math.log(q) / n if q > 0 else -math.inf
        bound = math.exp(k * math.log(n + 1) - n * closure.value) if math.isfinite(closure.value) else 0.0
        if exact is not None:
            upper_ok = exact <= bound * (1.0 + 1e-9)
        else:
            upper_ok = mc.estimate <= bound + 4.0 * mc.standard_error
        lower_bound = -interior.value - slack_constant * math.log(n) / n
        rows.append(SanovRow(n, exact, mc, log_rate, bound, bool(upper_ok), lower_bound, bool(log_rate >= lower_bound)))
    bridge = None
    if mode == "central" and closure.argmin is not None:
        d = kl_divergence(closure.argmin.weights, mu.weights)
        s = quantum_relative_entropy(CentralState(closure.argmin), CentralState(mu))
        bridge = {"relative_entropy": d, "quantum_relative_entropy": s, "equal": abs(d - s) <= 1e-12}
    return SanovReport(mode, closure, interior, slack_constant, rows, bridge)
