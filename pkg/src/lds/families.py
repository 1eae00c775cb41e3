"""Catalog of tabulated model families: Bernoulli grids, a discretized normal mixture, KMS bump mixtures."""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
from scipy.stats import norm

from .errors import DomainError
from .escort import ParametricModel
from .measures import Alphabet
from .selection import TruthSpec

bernoulli_grid = ParametricModel.bernoulli_grid


def uniform_bernoulli_grid(size: int = 999, beta: float = 1.0, name: str = "bernoulli") -> ParametricModel:
    """Interior midpoint-style grid ``{1/(size+1), ..., size/(size+1)}`` with uniform prior."""
    return bernoulli_grid(np.arange(1, size + 1) / (size + 1), beta=beta, name=name)


# --- discretized normal mixture -------------------------------------------------


def mixture_density(x: np.ndarray, a: float, b: float, c: float = 1.0) -> np.ndarray:
    """``(1 - a) phi(x | 0, c) + a phi(x | b, c)`` renormalized on the grid (density w.r.t. bin width)."""
    x = np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    f = (1.0 - a) * norm.pdf(x, 0.0, c) + a * norm.pdf(x, b, c)
    return f / (f.sum() * dx)


def normal_mixture_model(
    a_values: Sequence[float],
    b_values: Sequence[float],
    x: np.ndarray | None = None,
    c: float = 1.0,
    beta: float = 1.0,
) -> ParametricModel:
    """Two-component mixture with the first component pinned at the origin, on an equally spaced grid."""
    x = np.linspace(-5.0, 5.0, 51) if x is None else np.asarray(x, dtype=float)
    dx = x[1] - x[0]
    thetas = np.array(list(itertools.product(a_values, b_values)), dtype=float)
    if np.any((thetas[:, 0] < 0) | (thetas[:, 0] > 1)):
        raise DomainError("mixing weights must lie in [0, 1]")
    density = np.vstack([mixture_density(x, a, b, c) for a, b in thetas])
    prior = np.full(thetas.shape[0], 1.0 / thetas.shape[0])
    labels = Alphabet(tuple(float(v) for v in x))
    return ParametricModel(labels, np.full(x.size, dx), thetas, prior, density, beta, 2, "normal_mixture")


def mixture_loss(q: np.ndarray, x: np.ndarray, c: float = 1.0) -> Callable[[np.ndarray], float]:
    """``L(a, b) = -sum_i q_i m_i log p(x_i | a, b)`` as a function of ``(a, b)``."""
    x = np.asarray(x, dtype=float)
    qm = np.asarray(q, dtype=float) * (x[1] - x[0])

    def loss(theta):
        a, b = theta
        return -float(qm @ np.log(mixture_density(x, a, b, c)))

    return loss


def finite_difference_hessian(f: Callable[[np.ndarray], float], theta, step: float = 1e-3) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    theta = np.asarray(theta, dtype=float)
    d = theta.size
    h = np.zeros((d, d))
    e = np.eye(d) * step
    for i in range(d):
        for j in range(i, d):
            v = (f(theta + e[i] + e[j]) - f(theta + e[i] - e[j]) - f(theta - e[i] + e[j]) + f(theta - e[i] - e[j]))
            h[i, j] = h[j, i] = v / (4.0 * step * step)
    return h


# --- KMS bump mixtures ----------------------------------------------------------

KMS_BETAS = (0.5, 1.0, 1.5, 2.0, 2.5)
KMS_MUS = (-1.0, -0.5, 0.0, 0.5, 1.0)


def kms_alphabet(betas=KMS_BETAS, mus=KMS_MUS) -> tuple[Alphabet, np.ndarray]:
    """Labels ``b<beta>_mu<mu>`` for a grid of KMS parameters, plus their coordinates."""
    pts = np.array(list(itertools.product(betas, mus)), dtype=float)
    return Alphabet(tuple(f"b{b:g}_mu{u:g}" for b, u in pts)), pts


def kms_weights(points: np.ndarray, center, width: float, floor: float) -> np.ndarray:
    """Gaussian bump over the KMS grid mixed with a uniform floor."""
    d2 = ((points - np.asarray(center, dtype=float)[None, :]) ** 2).sum(axis=1)
    bump = np.exp(-0.5 * d2 / width**2)
    bump /= bump.sum()
    return (1.0 - floor) * bump + floor / points.shape[0]


def kms_family(
    centers: np.ndarray | None = None,
    width: float = 0.6,
    floor: float = 0.2,
    exclude: tuple | None = None,
    beta: float = 1.0,
    name: str = "kms",
) -> ParametricModel:
    """Model of mixed states over factor KMS states; parameter = bump center in the (beta, mu) plane.

    ``exclude = (center, radius)`` drops the parameter points within ``radius``
    of ``center``.  The reference measure is uniform over the KMS grid.
    """
    alphabet, pts = kms_alphabet()
    if centers is None:
        centers = np.array(list(itertools.product(np.linspace(0.5, 2.5, 9), np.linspace(-1.0, 1.0, 9))))
    centers = np.asarray(centers, dtype=float)
    if exclude is not None:
        c0, radius = exclude
        keep = np.linalg.norm(centers - np.asarray(c0, dtype=float)[None, :], axis=1) > radius
        centers = centers[keep]
    k = pts.shape[0]
    m = np.full(k, 1.0 / k)
    density = np.vstack([kms_weights(pts, c, width, floor) for c in centers]) / m[None, :]
    prior = np.full(centers.shape[0], 1.0 / centers.shape[0])
    return ParametricModel(alphabet, m, centers, prior, density, beta, 2, name)


KMS_TRUE_CENTER = (1.5, 0.25)


def kms_truth(center=KMS_TRUE_CENTER, width: float = 0.6, floor: float = 0.2) -> TruthSpec:
    _, pts = kms_alphabet()
    return TruthSpec(kms_weights(pts, center, width, floor) * pts.shape[0])
