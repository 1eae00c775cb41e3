"""Finite measures, central states and relative entropies.

A state whose central measure has finite support is fully described by the
weights it puts on each factor-state label.  In that representation the
quantum relative entropy of two states dominated by the counting measure on a
shared alphabet reduces to the classical Kullback-Leibler divergence of their
weight vectors, and the state itself is the diagonal density matrix carrying
those weights.  Both routes are implemented here so that the identity can be
checked rather than assumed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Hashable, Iterable, Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DomainError, StructuralError

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class Alphabet:
    """Ordered collection of distinct labels."""

    labels: tuple
    _index: dict = field(init=False, repr=False, compare=False)
    _str_index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        if not labels:
            raise StructuralError("alphabet must contain at least one label")
        if len(set(labels)) != len(labels):
            raise StructuralError(f"alphabet labels are not unique: {labels!r}")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "_index", {lab: i for i, lab in enumerate(labels)})
        strs = {str(lab): i for i, lab in enumerate(labels)}
        object.__setattr__(self, "_str_index", strs if len(strs) == len(labels) else {})

    @classmethod
    def of_size(cls, k: int, prefix: str = "rho") -> "Alphabet":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(k)))

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def index(self, label: Hashable) -> int:
        # Labels read from text files arrive as strings; fall back to str matching.
        try:
            return self._index[label]
        except (KeyError, TypeError):
            pass
        try:
            return self._str_index[str(label)]
        except KeyError:
            raise StructuralError(f"label {label!r} is not in the alphabet {self.labels!r}") from None

    def indices(self, seq: Iterable[Hashable]) -> np.ndarray:
        return np.fromiter((self.index(x) for x in seq), dtype=np.intp)

    def counts(self, seq: Iterable[Hashable]) -> np.ndarray:
        return np.bincount(self.indices(seq), minlength=len(self)).astype(np.int64)


def _as_alphabet(labels) -> Alphabet:
    return labels if isinstance(labels, Alphabet) else Alphabet(tuple(labels))


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Nonnegative weights on a finite alphabet.

    With ``normalized=True`` (the default) the weights must sum to one within
    ``1e-12``.  Unnormalized measures are used for reference measures ``m``.
    """

    alphabet: Alphabet
    weights: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if w.shape[0] != len(self.alphabet):
            raise StructuralError(
                f"{w.shape[0]} weights given for an alphabet of size {len(self.alphabet)}"
            )
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise DomainError(f"weights must be finite and nonnegative, got {w!r}")
        if self.normalized and abs(w.sum() - 1.0) > NORMALIZATION_TOL:
            raise DomainError(f"weights sum to {w.sum()!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_weights(cls, weights: Sequence[float], labels=None, normalized: bool = True):
        weights = np.asarray(weights, dtype=float)
        alphabet = Alphabet.of_size(len(weights)) if labels is None else _as_alphabet(labels)
        return cls(alphabet, weights, normalized)

    @classmethod
    def uniform(cls, alphabet) -> "DiscreteMeasure":
        alphabet = _as_alphabet(alphabet)
        return cls(alphabet, np.full(len(alphabet), 1.0 / len(alphabet)))

    @classmethod
    def point_mass(cls, alphabet, label) -> "DiscreteMeasure":
        alphabet = _as_alphabet(alphabet)
        w = np.zeros(len(alphabet))
        w[alphabet.index(label)] = 1.0
        return cls(alphabet, w)

    @classmethod
    def from_json(cls, obj: dict, normalized: bool = True) -> "DiscreteMeasure":
        try:
            labels, weights = obj["labels"], obj["weights"]
        except (KeyError, TypeError):
            raise StructuralError('measure JSON needs "labels" and "weights"') from None
        return cls(Alphabet(tuple(labels)), np.asarray(weights, dtype=float), normalized)

    def to_json(self) -> dict:
        return {"labels": list(self.alphabet.labels), "weights": [float(x) for x in self.weights]}

    @property
    def support(self) -> np.ndarray:
        return self.weights > 0

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def normalize(self) -> "DiscreteMeasure":
        total = self.weights.sum()
        if total <= 0:
            raise DomainError("cannot normalize a measure of zero mass")
        return DiscreteMeasure(self.alphabet, self.weights / total)

    def __getitem__(self, label) -> float:
        return float(self.weights[self.alphabet.index(label)])

    def __len__(self):
        return len(self.alphabet)

    def __eq__(self, other):
        if not isinstance(other, DiscreteMeasure):
            return NotImplemented
        return self.alphabet == other.alphabet and np.array_equal(self.weights, other.weights)

    def __hash__(self):
        return hash((self.alphabet.labels, self.weights.tobytes()))

    def __repr__(self):
        pairs = ", ".join(f"{lab!r}: {w:.6g}" for lab, w in zip(self.alphabet, self.weights))
        return f"DiscreteMeasure({{{pairs}}})"


@dataclass(frozen=True)
class CentralState:
    """A state given as the barycenter of a finite central measure."""

    central_measure: DiscreteMeasure

    def __post_init__(self):
        if not self.central_measure.normalized:
            raise DomainError("a central measure must be normalized")

    @classmethod
    def from_weights(cls, weights, labels=None) -> "CentralState":
        return cls(DiscreteMeasure.from_weights(weights, labels))

    @classmethod
    def from_json(cls, obj: dict) -> "CentralState":
        return cls(DiscreteMeasure.from_json(obj))

    def to_json(self) -> dict:
        return self.central_measure.to_json()

    @property
    def alphabet(self) -> Alphabet:
        return self.central_measure.alphabet

    @property
    def weights(self) -> np.ndarray:
        return self.central_measure.weights

    def __call__(self, observable: "Observable") -> float:
        return observable.expectation(self)


@dataclass(frozen=True, eq=False)
class Observable:
    """An observable evaluated through its values on the factor-state labels.

    ``values[i]`` is the value the i-th factor state assigns to the observable,
    so a state with central weights ``w`` evaluates it to ``w @ values``.
    ``norm`` defaults to the sup norm of the values.
    """

    values: np.ndarray
    norm: float | None = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float, copy=True).reshape(-1)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        norm = float(np.max(np.abs(v))) if self.norm is None else float(self.norm)
        if not norm > 0:
            raise DomainError("observable norms must be strictly positive")
        object.__setattr__(self, "norm", norm)

    def expectation(self, state: CentralState) -> float:
        if state.weights.shape != self.values.shape:
            raise StructuralError("observable and state live on alphabets of different sizes")
        return float(state.weights @ self.values)


@dataclass(frozen=True)
class StateMetricBasis:
    """Finite, ordered family of observables defining a weak-* metric on states."""

    observables: tuple

    def __post_init__(self):
        obs = tuple(self.observables)
        if not obs:
            raise StructuralError("the metric basis must contain at least one observable")
        object.__setattr__(self, "observables", obs)

    @classmethod
    def elementary_projections(cls, alphabet, norm: float = 1.0) -> "StateMetricBasis":
        k = len(alphabet) if not isinstance(alphabet, int) else alphabet
        return cls(tuple(Observable(np.eye(k)[i], norm) for i in range(k)))

    def scaled(self, factor: float) -> "StateMetricBasis":
        return StateMetricBasis(tuple(Observable(o.values, o.norm * factor) for o in self.observables))


def _check_same_alphabet(a: DiscreteMeasure, b: DiscreteMeasure):
    if a.alphabet != b.alphabet:
        raise StructuralError(
            f"measures live on different alphabets: {a.alphabet.labels!r} vs {b.alphabet.labels!r}"
        )


def kl_divergence(p, q, weights=None) -> float:
    """``sum_i w_i p_i log(p_i / q_i)`` on raw arrays.

    ``0 log 0 = 0``; a positive ``p_i`` facing ``q_i == 0`` gives ``inf``.
    ``weights`` (default all ones) lets ``p`` and ``q`` be densities with respect
    to a reference measure.  Zero tests are exact.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    mass = p if weights is None else p * np.asarray(weights, dtype=float)
    active = mass > 0
    if np.any(q[active] <= 0):
        return float("inf")
    return float(np.sum(mass[active] * (np.log(p[active]) - np.log(q[active]))))


def relative_entropy(nu: DiscreteMeasure, mu: DiscreteMeasure) -> float:
    """Relative entropy ``D(nu || mu)``; ``+inf`` unless ``nu << mu``."""
    _check_same_alphabet(nu, mu)
    if not (nu.normalized and mu.normalized):
        raise DomainError("relative_entropy expects normalized measures")
    return kl_divergence(nu.weights, mu.weights)


def quantum_relative_entropy(psi: CentralState, omega: CentralState) -> float:
    """``S(psi || omega)`` for states dominated by the counting measure on one alphabet.

    Equal to the relative entropy of the two central measures.
    """
    return relative_entropy(psi.central_measure, omega.central_measure)


def to_density_matrix(psi: CentralState) -> np.ndarray:
    return np.diag(np.asarray(psi.weights, dtype=float))


def matrix_relative_entropy(rho: np.ndarray, sigma: np.ndarray, tol: float = 1e-14) -> float:
    """``Tr[rho (log rho - log sigma)]`` for density matrices via eigendecompositions.

    Independent of the central-measure route; used to cross-check it.  Returns
    ``inf`` when the support of ``rho`` is not contained in that of ``sigma``.
    """
    rho = np.asarray(rho)
    sigma = np.asarray(sigma)
    if rho.shape != sigma.shape or rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise StructuralError("density matrices must be square and of equal shape")
    lr, u = np.linalg.eigh(rho)
    ls, v = np.linalg.eigh(sigma)
    lr = np.where(np.abs(lr) <= tol, 0.0, lr)
    ls = np.where(np.abs(ls) <= tol, 0.0, ls)
    if np.any(lr < 0) or np.any(ls < 0):
        raise DomainError("density matrices must be positive semidefinite")
    overlap = np.abs(u.conj().T @ v) ** 2
    pos_r = lr > 0
    pos_s = ls > 0
    leak = overlap[np.ix_(pos_r, ~pos_s)]
    if leak.size and np.any(leak > tol):
        return float("inf")
    tr_rho_log_rho = np.sum(lr[pos_r] * np.log(lr[pos_r]))
    tr_rho_log_sigma = np.sum(lr[pos_r, None] * overlap[np.ix_(pos_r, pos_s)] * np.log(ls[pos_s])[None, :])
    return float(tr_rho_log_rho - tr_rho_log_sigma)


def state_distance(omega1: CentralState, omega2: CentralState, basis: StateMetricBasis) -> float:
    """``sum_j 2^-j |omega1(A_j) - omega2(A_j)| / ||A_j||`` over a finite basis (j from 1)."""
    if not isinstance(basis, StateMetricBasis) or not basis.observables:
        raise StructuralError("a non-empty StateMetricBasis is required")
    total = 0.0
    for j, obs in enumerate(basis.observables, start=1):
        total += 2.0**-j * abs(obs.expectation(omega1) - obs.expectation(omega2)) / obs.norm
    return total


def log_sum_exp(values, axis=None, weights=None):
    """Max-shifted ``log(sum_i w_i exp(v_i))``."""
    return logsumexp(values, axis=axis, b=weights)


def measure_from(obj: Any, labels=None, normalized: bool = True) -> DiscreteMeasure:
    """Coerce a DiscreteMeasure, CentralState, JSON dict or weight sequence."""
    if isinstance(obj, DiscreteMeasure):
        return obj
    if isinstance(obj, CentralState):
        return obj.central_measure
    if isinstance(obj, dict):
        return DiscreteMeasure.from_json(obj, normalized)
    return DiscreteMeasure.from_weights(obj, labels, normalized)

