import numpy as np
import pytest

from rjstopover.data import make_design
from rjstopover.open_model import ArrivalMixture, BehaviourModel, DetectionModel, OpenParamState


def random_design(rng, T):
    types = list(rng.choice(list("CRN"), size=T, p=[0.45, 0.4, 0.15]))
    types[int(rng.integers(T))] = "C"
    return make_design(types, rng.uniform(0.5, 1.5, T).round(3), rng.integers(1, 4, T))


def simplex(rng, k):
    return np.ones(1) if k == 1 else rng.dirichlet(np.ones(k))


def random_open_state(rng, T, M=None, G=None, N=50):
    M = M or int(rng.integers(1, 4))
    G = G or int(rng.integers(1, 4))
    return OpenParamState(
        N,
        ArrivalMixture(simplex(rng, M), rng.uniform(0, T + 1, M), rng.uniform(0.2, T + 1, M)),
        BehaviourModel(simplex(rng, G), rng.normal(0, 1.5, G), rng.normal(0, 0.3), rng.normal(0, 0.3)),
        DetectionModel(*rng.normal(0, 1, 4), rng.uniform(0.05, 0.95)),
    )


def random_history(rng, design):
    """A valid marked history: first capture on a random capture day, then noise."""
    x = np.where(design.capture | design.resight, 0, -1).astype(np.int8)
    f = int(rng.choice(np.flatnonzero(design.capture)))
    x[f] = 1
    for t in range(f + 1, design.T):
        if design.capture[t] and rng.random() < 0.4:
            x[t] = 1
        elif design.resight[t] and rng.random() < 0.4:
            x[t] = 2
    return x


def random_open_instance(rng, T_max=8):
    T = int(rng.integers(1, T_max + 1))
    design = random_design(rng, T)
    return design, random_open_state(rng, T), random_history(rng, design)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def small_design():
    return make_design("CRCNRC", [1.0, 0, 0.7, 0, 0, 1.2], [1, 0, 2, 0, 0, 3])


@pytest.fixture
def small_state():
    return OpenParamState(
        40,
        ArrivalMixture([0.6, 0.4], [2.0, 4.5], [1.0, 1.5]),
        BehaviourModel([0.7, 0.3], [-1.0, 1.5], 0.1, -0.2),
        DetectionModel(-0.5, 0.3, 0.2, -0.4, 0.4),
    )
