"""Cramér-level large deviations for sample means of a scalar observable.

The cumulant generating function ``c(t) = log E exp(tX)`` and its Legendre
transform ``I(a) = sup_t {a t - c(t)}`` control ``P(M_n in G)`` for the sample
mean ``M_n``.  Exact tail probabilities come from convolving the atom lattice;
Monte Carlo (optionally exponentially tilted) covers the rest.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Callable, Sequence

import numpy as np
from scipy.special import logsumexp, softmax

from ._parallel import chunk_generators, derive_seed, map_ordered
from .errors import CapacityError, DomainError, NumericalError, StructuralError
from .intervals import Interval, IntervalSet

TAIL_CELL_CAP = 10**7
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class ScalarDistribution:
    """Finitely many atoms ``values[i]`` with probabilities ``probs[i]``.

    Duplicate values are merged, zero-probability atoms dropped and atoms
    sorted by value.
    """

    values: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        p = np.asarray(self.probs, dtype=float).reshape(-1)
        if v.shape != p.shape or v.size == 0:
            raise StructuralError("values and probs must be non-empty and of equal length")
        if not np.all(np.isfinite(v)):
            raise DomainError("atom values must be finite")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise DomainError("atom probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise DomainError(f"atom probabilities sum to {p.sum()!r}, expected 1")
        uniq, inv = np.unique(v, return_inverse=True)
        merged = np.bincount(inv, weights=p, minlength=uniq.size)
        keep = merged > 0
        v, p = uniq[keep], merged[keep]
        v.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_atoms(cls, atoms: Sequence[tuple[float, float]]) -> "ScalarDistribution":
        atoms = list(atoms)
        return cls(np.array([a[0] for a in atoms], float), np.array([a[1] for a in atoms], float))

    @classmethod
    def bernoulli(cls, p: float, low: float = 0.0, high: float = 1.0) -> "ScalarDistribution":
        return cls(np.array([low, high]), np.array([1.0 - p, p]))

    @classmethod
    def degenerate(cls, value: float) -> "ScalarDistribution":
        return cls(np.array([value]), np.array([1.0]))

    @classmethod
    def from_json(cls, obj) -> "ScalarDistribution":
        if "atoms" in obj:
            return cls.from_atoms(obj["atoms"])
        if "values" in obj and "probs" in obj:
            return cls(np.asarray(obj["values"], float), np.asarray(obj["probs"], float))
        if "bernoulli" in obj:
            return cls.bernoulli(float(obj["bernoulli"]))
        raise StructuralError('distribution JSON needs "atoms", "values"/"probs" or "bernoulli"')

    def to_json(self) -> dict:
        return {"atoms": [[float(v), float(p)] for v, p in zip(self.values, self.probs)]}

    @property
    def ess_min(self) -> float:
        return float(self.values[0])

    @property
    def ess_max(self) -> float:
        return float(self.values[-1])

    @property
    def mean(self) -> float:
        return float(self.probs @ self.values)

    @property
    def boundary_masses(self) -> tuple[float, float]:
        return float(self.probs[0]), float(self.probs[-1])

    def cgf(self, t: float) -> float:
        return float(logsumexp(np.log(self.probs) + t * self.values))

    def tilted_probs(self, t: float) -> np.ndarray:
        return softmax(np.log(self.probs) + t * self.values)

    def cgf_derivatives(self, t: float) -> tuple[float, float]:
        """First and second derivative of the CGF (tilted mean and variance)."""
        w = self.tilted_probs(t)
        m1 = float(w @ self.values)
        return m1, float(w @ (self.values - m1) ** 2)

    def sample_means(self, rng: np.random.Generator, n: int, size: int, tilt: float = 0.0):
        """Sample means of ``size`` independent samples of length ``n``, and their sums."""
        probs = self.probs if tilt == 0.0 else self.tilted_probs(tilt)
        counts = rng.multinomial(n, probs, size=size)
        sums = counts @ self.values
        return sums / n, sums


@dataclass(frozen=True, eq=False)
class SampledDistribution:
    """A distribution known through a seeded sampler plus optional CGF metadata.

    ``sampler(rng, shape)`` must return an array of draws.  ``cgf`` and
    ``cgf_prime`` (if supplied) are trusted on ``mgf_range``.
    """

    sampler: Callable[[np.random.Generator, tuple], np.ndarray]
    support: tuple[float, float] = (-math.inf, math.inf)
    mean: float | None = None
    cgf_fn: Callable[[float], float] | None = None
    cgf_prime_fn: Callable[[float], float] | None = None
    mgf_range: tuple[float, float] = (0.0, 0.0)
    boundary_masses: tuple[float, float] = (0.0, 0.0)

    @property
    def ess_min(self) -> float:
        return float(self.support[0])

    @property
    def ess_max(self) -> float:
        return float(self.support[1])

    def _check_t(self, t):
        lo, hi = self.mgf_range
        if self.cgf_fn is None or not (lo <= t <= hi):
            raise DomainError(f"t={t} outside the declared MGF validity range {self.mgf_range}")

    def cgf(self, t: float) -> float:
        self._check_t(t)
        return float(self.cgf_fn(t))

    def cgf_derivatives(self, t: float) -> tuple[float, float]:
        self._check_t(t)
        if self.cgf_prime_fn is None:
            raise DomainError("no CGF derivative declared for this sampler")
        h = 1e-5
        d2 = (self.cgf_prime_fn(t + h) - self.cgf_prime_fn(t - h)) / (2 * h)
        return float(self.cgf_prime_fn(t)), float(d2)

    def sample_means(self, rng: np.random.Generator, n: int, size: int, tilt: float = 0.0):
        if tilt != 0.0:
            raise DomainError("exponential tilting requires an atomic distribution")
        draws = np.asarray(self.sampler(rng, (size, n)), dtype=float)
        sums = draws.sum(axis=1)
        return sums / n, sums


def cgf(dist, t: float) -> float:
    """Cumulant generating function ``log E exp(t X)``."""
    return dist.cgf(t)


@dataclass(frozen=True, eq=False)
class RateFunctionProfile:
    """Legendre transform of a distribution's CGF, evaluated on demand."""

    source: ScalarDistribution | SampledDistribution
    max_iter: int = 500
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    @property
    def domain(self) -> tuple[float, float]:
        return self.source.ess_min, self.source.ess_max

    @property
    def mean(self) -> float:
        m = self.source.mean
        if m is None:
            m = self.source.cgf_derivatives(0.0)[0]
        return float(m)

    def cgf(self, t: float) -> float:
        return self.source.cgf(t)

    def optimizer(self, a: float) -> float:
        """The ``t`` solving ``c'(t) = a`` (interior points of the domain only)."""
        lo, hi = self.domain
        if not (lo < a < hi):
            raise DomainError(f"a={a} is not interior to the domain [{lo}, {hi}]")
        if a == self.mean:
            return 0.0
        tol = 1e-12 * (1.0 + abs(a))

        def g(t):
            d1, d2 = self.source.cgf_derivatives(t)
            return d1 - a, d2

        t_lo, t_hi = -1.0, 1.0
        g_lo, _ = g(t_lo)
        g_hi, _ = g(t_hi)
        grow = 0
        while g_hi < 0:
            t_lo, g_lo = t_hi, g_hi
            t_hi *= 2.0
            g_hi, _ = g(t_hi)
            grow += 1
            if grow > 1100:
                raise NumericalError("could not bracket the Legendre optimizer", a=a, t=t_hi)
        while g_lo > 0:
            t_hi, g_hi = t_lo, g_lo
            t_lo *= 2.0
            g_lo, _ = g(t_lo)
            grow += 1
            if grow > 1100:
                raise NumericalError("could not bracket the Legendre optimizer", a=a, t=t_lo)

        t = 0.5 * (t_lo + t_hi) if not (t_lo < 0.0 < t_hi) else 0.0
        for it in range(self.max_iter):
            gt, d2 = g(t)
            if abs(gt) <= tol:
                return t
            if gt < 0:
                t_lo = t
            else:
                t_hi = t
            if t_hi - t_lo <= 4 * np.spacing(max(abs(t_lo), abs(t_hi))):
                return t
            step = t - gt / d2 if d2 > 0 else math.nan
            t = step if t_lo < step < t_hi else 0.5 * (t_lo + t_hi)
        raise NumericalError(
            "Legendre maximization did not converge",
            a=a, t=t, residual=gt, bracket=(t_lo, t_hi), iterations=self.max_iter,
        )

    def rate(self, a: float) -> float:
        a = float(a)
        if a in self._cache:
            return self._cache[a]
        lo, hi = self.domain
        if math.isnan(a):
            raise DomainError("rate function evaluated at NaN")
        if a < lo or a > hi:
            value = math.inf
        elif lo == hi:
            value = 0.0
        elif a == lo or a == hi:
            mass = self.source.boundary_masses[0 if a == lo else 1]
            value = -math.log(mass) if mass > 0 else math.inf
        elif a == self.mean:
            value = 0.0
        else:
            t = self.optimizer(a)
            value = max(a * t - self.cgf(t), 0.0)
        self._cache[a] = value
        return value

    def infimum(self, gamma: IntervalSet, tol: float = 1e-13) -> tuple[float, float | None]:
        """``inf_{a in gamma} I(a)`` and a minimizing point (``None`` if infeasible).

        Works per interval: golden-section search on the part inside the domain,
        plus exact endpoint evaluations.  The rate is continuous on the closed
        domain, so an open interval has the same infimum as its closure as long
        as it meets the domain in more than boundary points.
        """
        lo_d, hi_d = self.domain
        best, arg = math.inf, None
        for iv in gamma:
            a = max(iv.lo, lo_d)
            b = min(iv.hi, hi_d)
            if a > b:
                continue
            if a == b and not bool(iv.contains(a)):
                # A single candidate point must actually belong to the interval.
                continue
            cands = [a, b]
            if a <= self.mean <= b:
                cands.append(self.mean)
            else:
                cands.append(self._golden(a, b, tol))
            for c in cands:
                v = self.rate(c)
                if v < best:
                    best, arg = v, c
        return best, arg

    def _golden(self, a: float, b: float, tol: float) -> float:
        x1 = b - GOLDEN * (b - a)
        x2 = a + GOLDEN * (b - a)
        f1, f2 = self.rate(x1), self.rate(x2)
        while b - a > tol * (1.0 + abs(a) + abs(b)):
            if f1 <= f2:
                b, x2, f2 = x2, x1, f1
                x1 = b - GOLDEN * (b - a)
                f1 = self.rate(x1)
            else:
                a, x1, f1 = x1, x2, f2
                x2 = a + GOLDEN * (b - a)
                f2 = self.rate(x2)
        return 0.5 * (a + b)


def rate_function(profile, a: float) -> float:
    """``I(a) = sup_t {a t - c(t)}``; ``+inf`` outside the essential range."""
    if not isinstance(profile, RateFunctionProfile):
        profile = RateFunctionProfile(profile)
    return profile.rate(a)


def _lattice(values: np.ndarray) -> tuple[Fraction, Fraction, list[int]]:
    fr = []
    for v in values:
        f = Fraction(float(v)).limit_denominator(10**6)
        if abs(float(f) - v) > 1e-12 * max(1.0, abs(v)):
            raise CapacityError(
                f"atom {v!r} is not on a rational lattice; use mc_mean_tail instead"
            )
        fr.append(f)
    base = fr[0]
    diffs = [f - base for f in fr[1:]]
    if not diffs:
        return base, Fraction(1), [0]
    denom = reduce(math.lcm, (d.denominator for d in diffs), 1)
    step = Fraction(reduce(math.gcd, (int(d * denom) for d in diffs)), denom)
    return base, step, [0] + [int(d / step) for d in diffs]


def exact_mean_tail(dist: ScalarDistribution, n: int, gamma: IntervalSet, cell_cap: int = TAIL_CELL_CAP) -> float:
    """Exact ``P(M_n in gamma)`` by n-fold convolution over the lattice of sums."""
    if not isinstance(dist, ScalarDistribution):
        raise DomainError("exact tails need an atomic distribution")
    if n < 1:
        raise DomainError("n must be at least 1")
    base, step, offsets = _lattice(dist.values)
    width = n * offsets[-1] + 1
    if n * width > cell_cap:
        raise CapacityError(
            f"exact tail needs {n * width} table cells (cap {cell_cap}); use mc_mean_tail instead"
        )
    kernel = np.zeros(offsets[-1] + 1)
    kernel[offsets] = dist.probs
    pmf = np.ones(1)
    for _ in range(n):
        pmf = np.convolve(pmf, kernel)
    # Means are rounded once from their exact rational value, so lattice points
    # sitting on a float endpoint such as 0.7 compare as the user wrote them.
    means = np.array([float(base + step * Fraction(s, n)) for s in range(width)])
    inside = gamma.contains(means)
    return math.fsum(pmf[inside])


@dataclass(frozen=True)
class TailEstimate:
    estimate: float
    standard_error: float
    replications: int
    tilt: float = 0.0

    def __iter__(self):
        return iter((self.estimate, self.standard_error))

    def to_json(self) -> dict:
        return {
            "estimate": self.estimate,
            "se": self.standard_error,
            "replications": self.replications,
            "tilt": self.tilt,
        }


def _dominating_tilt(dist, gamma: IntervalSet) -> float:
    profile = RateFunctionProfile(dist)
    value, arg = profile.infimum(gamma.closure())
    if arg is None or value == 0.0 or not math.isfinite(value):
        return 0.0
    lo, hi = profile.domain
    if not (lo < arg < hi):
        # Boundary dominating point: tilt toward it as far as a moderate t allows.
        arg = lo + (hi - lo) * (1e-3 if arg <= lo else 1.0 - 1e-3)
    return profile.optimizer(arg)


def mc_mean_tail(
    dist,
    n: int,
    gamma: IntervalSet,
    replications: int,
    seed: int,
    *,
    tilt: bool = False,
    chunk: int = 1 << 16,
    workers: int | None = None,
) -> TailEstimate:
    """Monte Carlo estimate of ``P(M_n in gamma)`` with its standard error.

    With ``tilt=True`` samples come from the exponentially tilted law at the
    optimizer of the rate function's dominating point, reweighted by the
    likelihood ratio ``exp(-t S_n + n c(t))`` so the estimate stays unbiased.
    """
    replications = int(replications)
    if replications < 1:
        raise DomainError("replications must be at least 1")
    t = _dominating_tilt(dist, gamma) if tilt else 0.0
    log_norm = n * dist.cgf(t) if t != 0.0 else 0.0
    tasks = chunk_generators(seed, replications, chunk)

    def run(task):
        rng, size = task
        means, sums = dist.sample_means(rng, n, size, tilt=t)
        hit = gamma.contains(means)
        if t == 0.0:
            return float(hit.sum()), float(hit.sum())
        w = np.where(hit, np.exp(-t * sums + log_norm), 0.0)
        return float(w.sum()), float((w * w).sum())

    parts = map_ordered(run, tasks, workers)
    s1 = math.fsum(p[0] for p in parts)
    s2 = math.fsum(p[1] for p in parts)
    est = s1 / replications
    if t == 0.0:
        se = math.sqrt(max(est * (1.0 - est), 0.0) / replications)
    elif replications > 1:
        var = max(s2 - replications * est * est, 0.0) / (replications - 1)
        se = math.sqrt(var / replications)
    else:
        se = math.inf
    return TailEstimate(est, se, replications, t)


@dataclass
class CramerRow:
    n: int
    exact: float | None
    mc: TailEstimate | None
    log_rate: float
    upper_bound: float
    upper_ok: bool
    lower_bound: float
    lower_ok: bool

    @property
    def bound_ok(self) -> bool:
        return self.upper_ok

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "exact": self.exact,
            "mc": None if self.mc is None else self.mc.to_json(),
            "log_rate": self.log_rate,
            "chernoff_bound": self.upper_bound,
            "upper_ok": self.upper_ok,
            "lower_bound": self.lower_bound,
            "lower_ok": self.lower_ok,
            "bound_ok": self.bound_ok,
        }


@dataclass
class CramerReport:
    gamma: IntervalSet
    rate_closure: float
    rate_interior: float
    slack_constant: float
    rows: list[CramerRow]

    @property
    def upper_ok(self) -> bool:
        return all(r.upper_ok for r in self.rows)

    @property
    def lower_ok(self) -> bool:
        """The asymptotic lower bound is judged at the largest n."""
        return bool(self.rows) and max(self.rows, key=lambda r: r.n).lower_ok

    @property
    def ok(self) -> bool:
        return self.upper_ok and self.lower_ok

    def to_json(self) -> dict:
        return {
            "gamma": str(self.gamma),
            "rate_at_inf": {"closure": self.rate_closure, "interior": self.rate_interior},
            "slack_constant": self.slack_constant,
            "per_n": [r.to_json() for r in self.rows],
            "upper_ok": self.upper_ok,
            "lower_ok": self.lower_ok,
            "bound_ok": self.ok,
        }


def cramer_bound_check(
    dist,
    gamma: IntervalSet,
    n_list: Sequence[int],
    *,
    slack_constant: float = 1.0,
    replications: int | None = None,
    seed: int = 0,
    tilt: bool = False,
    cell_cap: int = TAIL_CELL_CAP,
) -> CramerReport:
    """Check ``(1/n) log P(M_n in gamma)`` against the Cramér sandwich at finite n.

    Upper side, non-asymptotic: ``Q_n <= sum_c exp(-n inf_{closure(c)} I)`` over
    the connected components ``c`` of gamma (the Chernoff bound per component).
    Lower side, asymptotic: ``(1/n) log Q_n >= -inf_{interior} I - C log(n)/n``.
    """
    profile = RateFunctionProfile(dist)
    closure, interior = gamma.closure(), gamma.interior()
    rate_cl = profile.infimum(closure)[0]
    rate_int = profile.infimum(interior)[0]
    comp_rates = [profile.infimum(IntervalSet([Interval(iv.lo, iv.hi)]))[0] for iv in gamma]
    rows = []
    for n in sorted(int(x) for x in n_list):
        try:
            exact = exact_mean_tail(dist, n, gamma, cell_cap) if isinstance(dist, ScalarDistribution) else None
        except CapacityError:
            exact = None
        mc = None
        if replications:
            mc = mc_mean_tail(dist, n, gamma, replications, derive_seed(seed, "cramer", n), tilt=tilt)
        if exact is None and mc is None:
            raise CapacityError(f"no exact tail at n={n}; pass replications for a Monte Carlo estimate")
        q = exact if exact is not None else mc.estimate
        log_rate = math.log(q) / n if q > 0 else -math.inf
        chernoff = math.fsum(math.exp(-n * r) for r in comp_rates if math.isfinite(r))
        if exact is not None:
            upper_ok = exact <= chernoff * (1.0 + 1e-9)
        else:
            upper_ok = mc.estimate <= chernoff + 4.0 * mc.standard_error
        lower_bound = -rate_int - slack_constant * math.log(n) / n
        lower_ok = log_rate >= lower_bound
        rows.append(CramerRow(n, exact, mc, log_rate, chernoff, bool(upper_ok), lower_bound, bool(lower_ok)))
    return CramerReport(gamma, rate_cl, rate_int, slack_constant, rows)
