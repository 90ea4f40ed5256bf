"""Naive reference implementations for validating the optimized code.

Nothing here imports the model modules' likelihood code: entry
probabilities, inverse logits and history probabilities are recomputed
from scratch with plain loops over (group, arrival, departure).  Only the
parameter containers and the prior configuration are shared.
"""

import math
from dataclasses import dataclass

import numpy as np

from .closed_model import ClosedParamState
from .trace import ChainTrace


class BudgetError(ValueError):
    """The instance is too large for brute-force treatment."""


@dataclass(frozen=True)
class OracleBudget:
    max_T: int = 8
    max_N: int = 10
    max_components: int = 3
    max_draws: int = 10_000_000
    max_cells: int = 1_000_000

    def check_open(self, state, T):
        if T > self.max_T:
            raise BudgetError(f"T={T} exceeds the oracle budget ({self.max_T})")
        if max(state.M, state.G) > self.max_components:
            raise BudgetError(f"component count exceeds the oracle budget ({self.max_components})")

    def check_closed(self, T, N_max, G_max):
        if T > self.max_T:
            raise BudgetError(f"T={T} exceeds the oracle budget ({self.max_T})")
        if N_max is None or N_max > self.max_N:
            raise BudgetError(f"N_max={N_max} exceeds the oracle budget ({self.max_N})")
        if G_max > self.max_components:
            raise BudgetError(f"G_max={G_max} exceeds the oracle budget ({self.max_components})")


DEFAULT_BUDGET = OracleBudget()


# -- open model, literal sums -------------------------------------------------

def _phi(z):
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def _expit(x):
    return 1.0 / (1.0 + math.exp(-x)) if x > -700 else 0.0


def brute_entry(arrival, T):
    """Entry probabilities by direct differencing of the mixture CDF."""
    if T == 1:
        return [1.0]
    cdf = []
    for edge in range(1, T):
        cdf.append(sum(
            w * _phi((edge - mu) / sd) for w, mu, sd in zip(arrival.w, arrival.mu, arrival.sigma)
        ))
    beta = [cdf[0]] + [cdf[i] - cdf[i - 1] for i in range(1, T - 1)]
    beta.append(1.0 - cdf[-1])
    return beta


def _retain(beh, g, t, b):
    return _expit(beh.phi0[g] + beh.gamma_t * t + beh.gamma_a * (t - b + 1))


def _stay_prob(beh, g, b, d, T):
    """P(present exactly on days b..d | arrival b, group g), 1-based days."""
    prob = 1.0
    for t in range(b, d):
        prob *= _retain(beh, g, t, b)
    if d < T:
        prob *= 1.0 - _retain(beh, g, d, b)
    return prob


def _capture_probs(det, design):
    out = []
    for t in range(design.T):
        if design.occasion_type[t] == "C":
            loc = design.location[t]
            lin = det.cap0 + det.cap_e * design.effort[t]
            lin += det.cap_loc2 * (loc == 2) + det.cap_loc3 * (loc == 3)
            out.append(_expit(lin))
        else:
            out.append(0.0)
    return out


def _obs_prob(x, b, d, design, p, s):
    """P(recorded history x | present on b..d), days 1-based."""
    T = design.T
    first = next(t for t in range(1, T + 1) if x[t - 1] == 1)
    prob = 1.0
    for t in range(1, T + 1):
        v, kind = x[t - 1], design.occasion_type[t - 1]
        present = b <= t <= d
        if not present:
            if v > 0:
                return 0.0
            continue
        if kind == "C":
            prob *= p[t - 1] if v == 1 else 1.0 - p[t - 1]
        elif kind == "R" and t > first:
            prob *= s if v == 2 else 1.0 - s
    return prob


def brute_history_prob(state, design, x_h, budget=DEFAULT_BUDGET):
    budget.check_open(state, design.T)
    T = design.T
    beta = brute_entry(state.arrival, T)
    p = _capture_probs(state.detection, design)
    s = state.detection.s
    beh = state.behaviour
    total = 0.0
    for g in range(beh.G):
        for b in range(1, T + 1):
            for d in range(b, T + 1):
                total += (
                    beh.pi[g] * beta[b - 1] * _stay_prob(beh, g, b, d, T)
                    * _obs_prob(x_h, b, d, design, p, s)
                )
    return total


def brute_history_loglik(state, design, x_h, budget=DEFAULT_BUDGET):
    """log P(x_h) by the literal sum over group, arrival and departure."""
    prob = brute_history_prob(state, design, list(map(int, x_h)), budget)
    return math.log(prob) if prob > 0 else -math.inf


def brute_zero_history_prob(state, design, budget=DEFAULT_BUDGET):
    """P(never captured)."""
    budget.check_open(state, design.T)
    T = design.T
    beta = brute_entry(state.arrival, T)
    p = _capture_probs(state.detection, design)
    beh = state.behaviour
    total = 0.0
    for g in range(beh.G):
        for b in range(1, T + 1):
            for d in range(b, T + 1):
                missed = 1.0
                for t in range(b, d + 1):
                    missed *= 1.0 - p[t - 1]
                total += beh.pi[g] * beta[b - 1] * _stay_prob(beh, g, b, d, T) * missed
    return total


def brute_zeta(state, design, t, budget=DEFAULT_BUDGET):
    """P(present on resight day t, not yet captured, and counted)."""
    budget.check_open(state, design.T)
    if design.occasion_type[t - 1] != "R":
        raise ValueError(f"day {t} is not a resight day")
    T = design.T
    beta = brute_entry(state.arrival, T)
    p = _capture_probs(state.detection, design)
    beh = state.behaviour
    total = 0.0
    for g in range(beh.G):
        for b in range(1, t + 1):
            for d in range(t, T + 1):
                missed = 1.0
                for u in range(b, t):
                    missed *= 1.0 - p[u - 1]
                total += beh.pi[g] * beta[b - 1] * _stay_prob(beh, g, b, d, T) * missed
    return state.detection.s * total


# -- closed model -----------------------------------------------------------------

def brute_closed_history_prob(pi, p, x_h):
    total = 0.0
    for w, q in zip(pi, p):
        term = w
        for v in x_h:
            term *= q if v == 1 else 1.0 - q
        total += term
    return total


def _log_multinomial(N, n):
    return math.lgamma(N + 1) - sum(math.lgamma(k + 1) for k in n) - math.lgamma(N - sum(n) + 1)


def closed_brute_loglik(pi, p, N, data):
    n = [int(k) for k in data.multiplicities]
    D = sum(n)
    if N < D:
        return -math.inf
    total = _log_multinomial(N, n)
    for row, k in zip(data.histories, n):
        total += k * math.log(brute_closed_history_prob(pi, p, row))
    if N > D:
        total += (N - D) * math.log(brute_closed_history_prob(pi, p, [0] * data.histories.shape[1]))
    return total


def saturated_log_bound(data, N_values):
    """Upper bound on the marked likelihood over all cell probabilities.

    A multinomial pmf is largest when the cell probabilities equal the
    observed frequencies, whatever the model; maximizing over N gives a
    constant valid for every parameter value.
    """
    n = [int(k) for k in data.multiplicities]
    D = sum(n)
    best = -math.inf
    for N in N_values:
        if N < D:
            continue
        v = _log_multinomial(N, n) + sum(k * math.log(k / N) for k in n)
        if N > D:
            v += (N - D) * math.log((N - D) / N)
        best = max(best, v)
    return best


def _sample_closed_prior(priors, rng, size):
    """Labelled prior draws grouped by G: {G: (pi, p, N)} with one row per draw."""
    if priors.G_prior == "uniform":
        G = rng.integers(1, priors.G_max + 1, size=size)
    else:
        ks = np.arange(1, priors.G_max + 1)
        w = np.array([priors.G_mean ** (k - 1) / math.factorial(k - 1) for k in ks])
        G = rng.choice(ks, size=size, p=w / w.sum())
    Ns = np.arange(priors.D, priors.N_max + 1)
    weights = 1.0 / Ns
    N = rng.choice(Ns, size=size, p=weights / weights.sum())
    out = {}
    for g in range(1, priors.G_max + 1):
        m = int((G == g).sum())
        if m:
            out[g] = (rng.dirichlet(np.ones(g), size=m), rng.uniform(0.0, 1.0, size=(m, g)), N[G == g])
    return out


def _closed_brute_batch(pi, p, N, data):
    """Vectorized closed log-likelihood over rows of (pi, p, N)."""
    n = data.multiplicities.astype(float)
    D = n.sum()
    total = np.array([math.lgamma(k + 1) for k in N]) - float(sum(math.lgamma(k + 1) for k in n))
    total -= np.array([math.lgamma(k - D + 1) for k in N])
    for row, k in zip(data.histories, n):
        term = pi.copy()
        for v in row:
            term *= p if v == 1 else 1.0 - p
        total += k * np.log(term.sum(axis=1))
    zero = pi.copy()
    for _ in range(data.histories.shape[1]):
        zero *= 1.0 - p
    unseen = N - D
    with np.errstate(divide="ignore", invalid="ignore"):
        total += np.where(unseen > 0, unseen * np.log(zero.sum(axis=1)), 0.0)
    return total


@dataclass
class RejectionResult:
    trace: ChainTrace
    draws: int
    accepted: int
    log_bound: float

    @property
    def rate(self):
        return self.accepted / self.draws if self.draws else 0.0


def rejection_posterior(model, data, design, priors, max_draws, rng, target_accepted=None,
                        budget=DEFAULT_BUDGET, batch=100000):
    """Exact posterior draws by prior sampling plus rejection.

    Each prior draw is kept with probability L / L_max, where L_max is the
    saturated bound above.  Supports the closed model; ``target_accepted``
    stops after the first batch that reaches that many kept draws.
    """
    if model != "closed":
        raise BudgetError("the rejection oracle supports the closed model only")
    priors = priors.resolve(design.T, data.D)
    if priors.N_prior != "reciprocal":
        raise BudgetError("the rejection oracle needs a bounded N prior")
    budget.check_closed(design.T, priors.N_max, priors.G_max)
    if max_draws > budget.max_draws:
        raise BudgetError(f"max_draws={max_draws} exceeds the oracle budget ({budget.max_draws})")
    log_bound = saturated_log_bound(data, range(priors.D, priors.N_max + 1))
    trace = ChainTrace("closed", meta={"oracle": "rejection"})
    draws = accepted = 0
    while draws < max_draws and (target_accepted is None or accepted < target_accepted):
        size = min(batch, max_draws - draws)
        for g, (pi, p, N) in _sample_closed_prior(priors, rng, size).items():
            ll = _closed_brute_batch(pi, p, N, data)
            if np.any(ll > log_bound + 1e-9):
                raise AssertionError(f"likelihood {ll.max()} exceeds the rejection bound {log_bound}")
            keep = np.flatnonzero(rng.random(ll.shape[0]) < np.exp(ll - log_bound))
            for i in keep:
                accepted += 1
                trace.append(accepted, ClosedParamState(pi[i], p[i], int(N[i])), ll[i], 0.0)
        draws += size
    if accepted == 0 or accepted / draws < 1e-6:
        raise BudgetError(
            f"rejection acceptance rate {accepted}/{draws} too low; instance too large"
        )
    return RejectionResult(trace, draws, accepted, log_bound)


@dataclass
class DiscreteTable:
    p_grid: np.ndarray  # rows: candidate p vectors
    N_values: np.ndarray
    prob: np.ndarray  # len(p_grid) x len(N_values), sums to 1

    def N_marginal(self):
        return self.prob.sum(axis=0)

    def N_mode(self):
        return int(self.N_values[int(np.argmax(self.N_marginal()))])


def enumerate_discrete_posterior(data, p_grid, N_values, pi=None, N_prior="reciprocal",
                                 budget=DEFAULT_BUDGET):
    """Exact closed-model posterior on a finite (p, N) grid with fixed G and pi.

    ``p_grid`` holds candidate p vectors (or scalars when G=1) with a flat
    prior over the grid; the N prior is 1/N or flat.
    """
    grid = np.atleast_1d(np.asarray(p_grid, dtype=float))
    if grid.ndim == 1:
        grid = grid[:, None]
    G = grid.shape[1]
    pi = np.full(G, 1.0 / G) if pi is None else np.asarray(pi, dtype=float)
    N_values = np.asarray(list(N_values), dtype=np.int64)
    if grid.shape[0] * N_values.size > budget.max_cells:
        raise BudgetError("enumeration grid too large")
    logp = np.full((grid.shape[0], N_values.size), -math.inf)
    for i, p in enumerate(grid):
        for j, N in enumerate(N_values):
            ll = closed_brute_loglik(pi, p, int(N), data)
            prior = -math.log(N) if N_prior == "reciprocal" else 0.0
            logp[i, j] = ll + prior
    top = logp.max()
    if top == -math.inf:
        raise ValueError("every grid cell has zero posterior mass")
    w = np.exp(logp - top)
    return DiscreteTable(grid, N_values, w / w.sum())
