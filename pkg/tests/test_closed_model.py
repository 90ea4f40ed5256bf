import math

import numpy as np
import pytest

from rjstopover import oracle
from rjstopover.closed_model import ClosedLikelihood, ClosedParamState, closed_history_loglik, closed_loglik
from rjstopover.data import ObservedData, merge_histories


def dataset(rows, counts):
    hist, mult = merge_histories([np.array(r, dtype=np.int8) for r in rows], counts)
    return ObservedData(hist, mult)


def test_history_examples():
    assert closed_history_loglik(ClosedParamState([1.0], [0.5], 2), [1, 0]) == pytest.approx(math.log(0.25))
    mix = ClosedParamState([0.5, 0.5], [0.2, 0.8], 2)
    assert closed_history_loglik(mix, [1, 1]) == pytest.approx(math.log(0.5 * 0.04 + 0.5 * 0.64), rel=1e-14)
    assert closed_history_loglik(ClosedParamState([1.0], [0.1], 5), [0] * 18) == pytest.approx(
        18 * math.log(0.9), rel=1e-14)


def test_N_equal_D_and_below():
    data = dataset([[1, 0], [1, 1]], [2, 1])
    state = ClosedParamState([1.0], [0.4], 3)
    expected = math.log(3) + 2 * math.log(0.4 * 0.6) + math.log(0.16)
    assert closed_loglik(state, data) == pytest.approx(expected, rel=1e-13)
    state.N = 2
    assert closed_loglik(state, data) == -math.inf


def test_tiny_symbolic_expansion():
    data = dataset([[1, 0], [0, 1]], [1, 1])
    pi, p, N = (0.3, 0.7), (0.2, 0.6), 4
    state = ClosedParamState(pi, p, N)
    one = pi[0] * p[0] * (1 - p[0]) + pi[1] * p[1] * (1 - p[1])
    zero = pi[0] * (1 - p[0]) ** 2 + pi[1] * (1 - p[1]) ** 2
    expected = math.log(math.factorial(4) / (1 * 1 * math.factorial(2)) * one * one * zero ** 2)
    assert closed_loglik(state, data) == pytest.approx(expected, rel=1e-13)


def test_rabbit_sized_structure(rng):
    rows = (rng.random((75, 18)) < 0.2).astype(np.int8)
    rows[:, 0] = 1
    data = dataset(list(rows), np.ones(75, dtype=int))
    value = closed_loglik(ClosedParamState([0.6, 0.4], [0.1, 0.3], 135), data)
    assert data.D == 75 and math.isfinite(value)


def test_label_symmetry_and_collapse(rng):
    data = dataset([[1, 0, 1], [0, 0, 1], [1, 1, 1]], [3, 2, 1])
    a = ClosedParamState([0.2, 0.5, 0.3], [0.1, 0.5, 0.8], 12)
    b = ClosedParamState([0.3, 0.2, 0.5], [0.8, 0.1, 0.5], 12)
    assert closed_loglik(a, data) == pytest.approx(closed_loglik(b, data), rel=1e-14)
    single = closed_loglik(ClosedParamState([1.0], [0.35], 12), data)
    for G in (2, 4):
        equal = ClosedParamState(rng.dirichlet(np.ones(G)), np.full(G, 0.35), 12)
        assert closed_loglik(equal, data) == pytest.approx(single, rel=1e-13)


def test_matches_brute_force(rng):
    for _ in range(30):
        T = int(rng.integers(1, 5))
        n_rows = int(rng.integers(1, 4))
        rows = (rng.random((n_rows, T)) < 0.5).astype(np.int8)
        rows[:, int(rng.integers(T))] = 1
        data = dataset(list(rows), rng.integers(1, 3, n_rows))
        G = int(rng.integers(1, 4))
        pi, p = rng.dirichlet(np.ones(G)), rng.uniform(0.01, 0.99, G)
        N = int(rng.integers(data.D, 9)) if data.D <= 8 else data.D
        fast = closed_loglik(ClosedParamState(pi, p, N), data)
        assert fast == pytest.approx(oracle.closed_brute_loglik(pi, p, N, data), rel=1e-12)


def test_cache_follows_dataset():
    a = dataset([[1, 0]], [1])
    b = dataset([[1, 1]], [2])
    state = ClosedParamState([1.0], [0.3], 4)
    la, lb = ClosedLikelihood(a), ClosedLikelihood(b)
    va = la.loglik(state)
    assert lb.loglik(state) == closed_loglik(state, b)
    assert la.loglik(state) == va
