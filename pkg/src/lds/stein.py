"""Neyman-Pearson testing between commuting (diagonal) product states.

For diagonal states the optimal tests are diagonal too, so everything reduces
to classical likelihood-ratio tests on outcome tuples.  The log-likelihood
ratio is linear in the label counts, so sums run over type classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import CapacityError, DomainError, StructuralError
from .measures import CentralState, DiscreteMeasure, quantum_relative_entropy
from .sanov import composition_count, compositions

TYPE_CLASS_CAP = 5 * 10**6
DEFAULT_EPSILONS = (0.05, 0.5, 0.95)


@dataclass(frozen=True)
class HypothesisPair:
    """True state ``psi`` against alternative ``phi``, both with strictly positive weights."""

    psi: DiscreteMeasure
    phi: DiscreteMeasure

    def __post_init__(self):
        if self.psi.alphabet != self.phi.alphabet:
            raise StructuralError("hypotheses must share one alphabet")
        for name, mu in (("psi", self.psi), ("phi", self.phi)):
            if not mu.normalized:
                raise DomainError(f"{name} must be normalized")
            if np.any(mu.weights <= 0) or np.any(mu.weights >= 1):
                raise DomainError(f"{name} weights must lie strictly between 0 and 1")

    @classmethod
    def from_weights(cls, psi, phi, labels=None) -> "HypothesisPair":
        return cls(DiscreteMeasure.from_weights(psi, labels), DiscreteMeasure.from_weights(phi, labels))

    @property
    def relative_entropy(self) -> float:
        return quantum_relative_entropy(CentralState(self.psi), CentralState(self.phi))

    def merged(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Symbols grouped by equal likelihood ratio: (log-ratios, psi masses, phi masses)."""
        llr = np.log(self.psi.weights) - np.log(self.phi.weights)
        order = np.argsort(llr, kind="stable")
        groups: list[list[int]] = []
        for i in order:
            if groups and abs(llr[i] - llr[groups[-1][0]]) <= 1e-12 * (1.0 + abs(llr[i])):
                groups[-1].append(int(i))
            else:
                groups.append([int(i)])
        psi = np.array([self.psi.weights[g].sum() for g in groups])
        phi = np.array([self.phi.weights[g].sum() for g in groups])
        return np.log(psi) - np.log(phi), psi, phi


@dataclass(frozen=True)
class NPTest:
    """Accept ``psi`` when the log-likelihood ratio exceeds ``threshold``; at equality accept with probability ``gamma``."""

    n: int
    threshold: float
    gamma: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if not 0.0 <= self.gamma <= 1.0:
            raise DomainError(f"randomization probability must lie in [0, 1], got {self.gamma!r}")

    @classmethod
    def accept_all(cls, n: int) -> "NPTest":
        return cls(n, -math.inf, 1.0)

    @classmethod
    def reject_all(cls, n: int) -> "NPTest":
        return cls(n, math.inf, 0.0)

    def to_json(self) -> dict:
        return {"n": self.n, "threshold": self.threshold, "gamma": self.gamma}


@dataclass(frozen=True)
class _TypeTable:
    stat: np.ndarray
    log_psi: np.ndarray
    log_phi: np.ndarray


def _type_table(pair: HypothesisPair, n: int, cap: int = TYPE_CLASS_CAP) -> _TypeTable:
    llr, psi, phi = pair.merged()
    k = llr.shape[0]
    if composition_count(n, k) > cap:
        raise CapacityError(f"{composition_count(n, k)} type classes exceed the cap {cap}")
    counts = compositions(n, k)
    log_mult = gammaln(n + 1) - gammaln(counts + 1).sum(axis=1)
    return _TypeTable(counts @ llr, log_mult + counts @ np.log(psi), log_mult + counts @ np.log(phi))


def _ties(stat: np.ndarray, tau: float) -> np.ndarray:
    if not math.isfinite(tau):
        return np.zeros(stat.shape, bool)
    return np.abs(stat - tau) <= 1e-10 * (1.0 + abs(tau))


def error_probabilities(pair: HypothesisPair, test: NPTest, cap: int = TYPE_CLASS_CAP) -> tuple[float, float]:
    """Exact ``(alpha_n, beta_n)``: rejecting under ``psi`` and accepting under ``phi``."""
    table = _type_table(pair, test.n, cap)
    tie = _ties(table.stat, test.threshold)
    above = (table.stat > test.threshold) & ~tie
    accept = np.where(above, 1.0, np.where(tie, test.gamma, 0.0))
    p_psi = np.exp(table.log_psi - logsumexp(table.log_psi))
    p_phi = np.exp(table.log_phi - logsumexp(table.log_phi))
    alpha = math.fsum(p_psi * (1.0 - accept))
    beta = math.fsum(p_phi * accept)
    return alpha, beta


@dataclass(frozen=True)
class NPResult:
    beta_star: float
    log_beta_star: float
    alpha: float
    test: NPTest

    def __iter__(self):
        return iter((self.beta_star, self.test))


def _grouped(pair: HypothesisPair, n: int, cap: int):
    """Tie groups of the statistic in decreasing order, with normalized psi mass and log phi mass."""
    table = _type_table(pair, n, cap)
    order = np.argsort(-table.stat, kind="stable")
    stat = table.stat[order]
    lpsi = table.log_psi[order] - logsumexp(table.log_psi)
    lphi = table.log_phi[order] - logsumexp(table.log_phi)
    fresh = np.abs(np.diff(stat)) > 1e-10 * (1.0 + np.abs(stat[1:]))
    starts = np.concatenate([[0], np.flatnonzero(fresh) + 1])
    tau = stat[starts]
    psi_mass = np.add.reduceat(np.exp(lpsi), starts)
    top = np.maximum.reduceat(lphi, starts)
    ends = np.append(starts[1:], stat.shape[0])
    shifted = np.exp(lphi - np.repeat(top, ends - starts))
    log_phi_mass = top + np.log(np.add.reduceat(shifted, starts))
    return tau, psi_mass, log_phi_mass


def np_optimal_beta(pair: HypothesisPair, n: int, eps: float, cap: int = TYPE_CLASS_CAP) -> NPResult:
    """Smallest ``beta_n`` over all tests with ``alpha_n <= eps``, and the randomized test attaining it.

    Type classes are accepted in decreasing likelihood-ratio order until the
    accepted ``psi`` mass reaches ``1 - eps``; the boundary tie group is
    randomized so that ``alpha_n = eps`` exactly.
    """
    if not 0.0 < eps < 1.0:
        raise DomainError(f"eps must lie in (0, 1), got {eps!r}")
    tau, psi_mass, log_phi_mass = _grouped(pair, n, cap)
    target = 1.0 - eps
    cum = np.cumsum(psi_mass)
    j = int(np.searchsorted(cum, target, side="left"))
    j = min(j, tau.shape[0] - 1)
    before = float(cum[j - 1]) if j > 0 else 0.0
    gamma = float(np.clip((target - before) / psi_mass[j], 0.0, 1.0)) if psi_mass[j] > 0 else 1.0
    parts = list(log_phi_mass[:j])
    if gamma > 0:
        parts.append(math.log(gamma) + log_phi_mass[j])
    log_beta = float(logsumexp(parts)) if parts else -math.inf
    alpha = 1.0 - (before + gamma * float(psi_mass[j]))
    return NPResult(math.exp(log_beta), log_beta, alpha, NPTest(n, float(tau[j]), gamma))


def np_tradeoff(pair: HypothesisPair, n: int, cap: int = TYPE_CLASS_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Vertices ``(alpha, beta)`` of the optimal trade-off curve; linear in between by randomization."""
    _, psi_mass, log_phi_mass = _grouped(pair, n, cap)
    alpha = 1.0 - np.concatenate([[0.0], np.cumsum(psi_mass)])
    beta = np.concatenate([[0.0], np.cumsum(np.exp(log_phi_mass))])
    return np.clip(alpha, 0.0, 1.0), beta


@dataclass
class SteinRow:
    n: int
    eps: float
    beta_star: float
    log_beta_star: float
    e_n: float
    deviation: float
    allowance: float

    @property
    def ok(self) -> bool:
        return self.deviation <= self.allowance

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "eps": self.eps,
            "beta_star": self.beta_star,
            "log_beta_star": self.log_beta_star,
            "e_n": self.e_n,
            "deviation": self.deviation,
            "allowance": self.allowance,
            "ok": self.ok,
        }


@dataclass
class SteinReport:
    target_exponent: float
    constant: float
    rows: list[SteinRow]

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def spread(self, n: int) -> float:
        """Largest difference of ``e_n`` across the epsilons at one ``n``."""
        vals = [r.e_n for r in self.rows if r.n == n]
        return max(vals) - min(vals) if vals else math.nan

    def to_json(self) -> dict:
        return {
            "target_exponent": self.target_exponent,
            "constant": self.constant,
            "per_n": [r.to_json() for r in self.rows],
            "bound_ok": self.ok,
        }


def stein_exponent_check(
    pair: HypothesisPair,
    eps: float | Sequence[float] = DEFAULT_EPSILONS,
    n_list: Sequence[int] = (100, 300, 1000),
    constant: float = 2.0,
    cap: int = TYPE_CLASS_CAP,
) -> SteinReport:
    """``e_n = (1/n) log beta*_n(eps)`` against ``-S(psi || phi)``.

    Each row asserts ``|e_n + S| <= constant (1 + |log eps|) / sqrt(n)``.
    """
    eps_list = [float(eps)] if np.isscalar(eps) else [float(e) for e in eps]
    ns = [int(n) for n in n_list]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise DomainError("n_list must be increasing")
    s = pair.relative_entropy
    rows = []
    for n in ns:
        for e in eps_list:
            res = np_optimal_beta(pair, n, e, cap)
            e_n = res.log_beta_star / n
            allowance = constant * (1.0 + abs(math.log(e))) / math.sqrt(n)
            rows.append(SteinRow(n, e, res.beta_star, res.log_beta_star, e_n, abs(e_n + s), allowance))
    return SteinReport(-s, constant, rows)
