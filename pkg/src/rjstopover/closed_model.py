"""Closed-population model with G capture-heterogeneity groups.

Capture probabilities are constant over time, so a history's probability
depends only on its number of captures.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln

from . import kernels


@dataclass(eq=False)
class ClosedParamState:
    pi: np.ndarray
    p: np.ndarray
    N: int
    cache: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.p = np.asarray(self.p, dtype=float)

    @property
    def G(self):
        return self.pi.shape[0]


def closed_history_loglik(state, x_h):
    """log sum_g pi_g prod_t p_g^x (1 - p_g)^(1 - x) for a binary history."""
    x_h = np.asarray(x_h)
    k = np.array([int(x_h.sum())], dtype=np.int64)
    return float(kernels.closed_core(state.pi, state.p, k, int(x_h.shape[0]))[0])


class ClosedLikelihood:
    """Closed-model likelihood bound to one dataset (histories over {0, 1})."""

    def __init__(self, data):
        X = data.histories
        self.T = X.shape[1]
        self.D = data.D
        n = data.multiplicities.astype(float)
        self.log_n_fact = float(gammaln(n + 1).sum())
        caught = (X == 1).sum(axis=1)
        # aggregate multiplicities by capture count; slot 0 is the zero history
        ks = np.unique(caught)
        self.ks = np.concatenate([[0], ks]).astype(np.int64)
        self.weights = np.array([0.0] + [n[caught == k].sum() for k in ks])

    def core(self, state):
        cache = state.cache
        if cache is None or cache[0] is not self:
            lp = kernels.closed_core(state.pi, state.p, self.ks, self.T)
            cache = state.cache = (self, float(self.weights[1:] @ lp[1:]), float(lp[0]))
        return cache[1], cache[2]

    def loglik(self, state):
        N, D = state.N, self.D
        if N < D:
            return -math.inf
        hist_sum, log_p0 = self.core(state)
        unseen = N - D
        zero_term = unseen * log_p0 if unseen > 0 else 0.0
        return math.lgamma(N + 1) - self.log_n_fact - math.lgamma(unseen + 1) + hist_sum + zero_term


def closed_loglik(state, data):
    return ClosedLikelihood(data).loglik(state)
