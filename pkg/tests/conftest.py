import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from lds.escort import ParametricModel
from lds.measures import Alphabet

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def two_point():
    """Bernoulli grid {0.3, 0.7}, uniform prior, beta = 1."""
    return ParametricModel.bernoulli_grid([0.3, 0.7])


@pytest.fixture
def abc():
    return Alphabet(("a", "b", "c"))


def random_model(rng, k=3, g=4, beta=None, m=None):
    """Random tabulated model with exact normalization against m."""
    m = rng.uniform(0.5, 2.0, size=k) if m is None else np.asarray(m, float)
    probs = rng.dirichlet(np.ones(k), size=g)
    density = probs / m[None, :]
    prior = rng.dirichlet(np.ones(g))
    beta = rng.uniform(0.3, 3.0) if beta is None else beta
    return ParametricModel(Alphabet(tuple(range(k))), m, np.arange(g, dtype=float), prior, density, beta)
