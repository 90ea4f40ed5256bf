"""Integrated open-population stopover likelihood.

Animals arrive according to a mixture of normal arrival-time distributions,
stay according to a group-specific logistic retention model, are captured
on capture days and resighted (marked) or counted (unmarked) on resight
days.  Days are 1-based in the public API and 0-based internally.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfc, gammaln, log_expit, xlog1py, xlogy

from . import kernels
from .data import MISSING, history_bounds

_SQRT2 = math.sqrt(2.0)


@dataclass(eq=False)
class ArrivalMixture:
    w: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    cache: object = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        self.mu = np.asarray(self.mu, dtype=float)
        self.sigma = np.asarray(self.sigma, dtype=float)

    @property
    def M(self):
        return self.w.shape[0]


@dataclass(eq=False)
class BehaviourModel:
    pi: np.ndarray
    phi0: np.ndarray
    gamma_t: float = 0.0
    gamma_a: float = 0.0

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        self.phi0 = np.asarray(self.phi0, dtype=float)

    @property
    def G(self):
        return self.pi.shape[0]


@dataclass(eq=False)
class DetectionModel:
    cap0: float = 0.0
    cap_e: float = 0.0
    cap_loc2: float = 0.0
    cap_loc3: float = 0.0
    s: float = 0.5
    cache: object = field(default=None, init=False, repr=False)


@dataclass(eq=False)
class OpenParamState:
    N: int
    arrival: ArrivalMixture
    behaviour: BehaviourModel
    detection: DetectionModel
    cache: object = field(default=None, init=False, repr=False)

    @property
    def M(self):
        return self.arrival.M

    @property
    def G(self):
        return self.behaviour.G


@dataclass(frozen=True)
class LatentHistory:
    g: int
    b: int
    d: int


def inv_logit(x):
    """Overflow-safe inverse logit for scalars."""
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    z = math.exp(x)
    return z / (1.0 + z)


def normal_cdf(x, mu, sigma):
    return 0.5 * erfc(-(np.asarray(x, dtype=float) - mu) / (sigma * _SQRT2))


def normal_sf(x, mu, sigma):
    return 0.5 * erfc((np.asarray(x, dtype=float) - mu) / (sigma * _SQRT2))


def entry_probabilities(arrival, T):
    """Entry probabilities beta_0..beta_{T-1} from the arrival mixture.

    Cell b-1 holds the mixture mass in (b-1, b]; the first cell is open to
    the left and the last cell is the complement of the others, so the
    vector sums to one.
    """
    if T < 1:
        raise ValueError("entry probabilities need T >= 1")
    if T == 1:
        return np.ones(1)
    edges = np.arange(1, T, dtype=float)  # 1..T-1
    mu = arrival.mu[:, None]
    z = (edges[None, :] - mu) / (arrival.sigma[:, None] * _SQRT2)
    lower_tail = 0.5 * erfc(-z)  # components x edges
    upper_tail = 0.5 * erfc(z)
    # differences taken on whichever tail keeps precision
    use_upper = edges[None, :-1] > mu
    inner = np.where(
        use_upper, upper_tail[:, :-1] - upper_tail[:, 1:], lower_tail[:, 1:] - lower_tail[:, :-1]
    )
    beta = np.empty(T)
    beta[0] = arrival.w @ lower_tail[:, 0]
    beta[1:T - 1] = arrival.w @ inner
    beta[T - 1] = max(0.0, 1.0 - beta[: T - 1].sum())
    return beta


def retention_probability(behaviour, g, t, a):
    if not 1 <= g <= behaviour.G:
        raise IndexError(f"group {g} outside 1..{behaviour.G}")
    if t < 1 or a < 1:
        raise IndexError("day and age are 1-based")
    return inv_logit(behaviour.phi0[g - 1] + behaviour.gamma_t * t + behaviour.gamma_a * a)


def capture_linear_predictor(detection, design):
    """logit(p_t) on every day (nan on non-capture days)."""
    cap = design.capture
    loc = design.location
    eff = np.where(cap, design.effort, 0.0)
    lin = (
        detection.cap0
        + detection.cap_e * eff
        + detection.cap_loc2 * (loc == 2)
        + detection.cap_loc3 * (loc == 3)
    )
    return np.where(cap, lin, np.nan)


def capture_probability(detection, design, t):
    if design.occasion_type[t - 1] != "C":
        raise ValueError(f"day {t} is not a capture day")
    return inv_logit(float(capture_linear_predictor(detection, design)[t - 1]))


@dataclass(frozen=True)
class DetectionVectors:
    capfail: np.ndarray  # (1 - p_t)^{c_t}
    nodet: np.ndarray  # (1 - p_t)^{c_t} (1 - s)^{r_t}
    log_p: np.ndarray  # log p_t on capture days, 0 elsewhere
    log_q: np.ndarray  # log(1 - p_t) on capture days, 0 elsewhere


def detection_vectors(detection, design):
    cap = design.capture
    lin = np.where(cap, capture_linear_predictor(detection, design), 0.0)
    log_p = np.where(cap, log_expit(lin), 0.0)
    log_q = np.where(cap, log_expit(-lin), 0.0)
    capfail = np.where(cap, np.exp(log_q), 1.0)
    nodet = capfail * np.where(design.resight, 1.0 - detection.s, 1.0)
    return DetectionVectors(capfail, nodet, log_p, log_q)


def latent_history_logprob(state, beta, z):
    """log P(z | theta) for latent history z = (g, b, d), all 1-based."""
    T = beta.shape[0]
    beh = state.behaviour
    if not (1 <= z.b <= z.d <= T and 1 <= z.g <= beh.G):
        raise ValueError(f"latent history {z} outside bounds")
    with np.errstate(divide="ignore"):
        total = math.log(beh.pi[z.g - 1]) if beh.pi[z.g - 1] > 0 else -math.inf
        total += math.log(beta[z.b - 1]) if beta[z.b - 1] > 0 else -math.inf
    for t in range(z.b, z.d):
        x = beh.phi0[z.g - 1] + beh.gamma_t * t + beh.gamma_a * (t - z.b + 1)
        total += float(log_expit(x))
    if z.d < T:
        x = beh.phi0[z.g - 1] + beh.gamma_t * z.d + beh.gamma_a * (z.d - z.b + 1)
        total += float(log_expit(-x))
    return total


def _core_arrays(state, beta, design, dv=None):
    dv = dv if dv is not None else detection_vectors(state.detection, design)
    beh = state.behaviour
    return kernels.open_core(
        np.ascontiguousarray(beta, dtype=float),
        np.ascontiguousarray(beh.pi, dtype=float),
        np.ascontiguousarray(beh.phi0, dtype=float),
        float(beh.gamma_t),
        float(beh.gamma_a),
        dv.capfail,
        dv.nodet,
        design.resight.astype(np.uint8),
        float(state.detection.s),
    )


def _middle_terms(X, first, last, design):
    """Per-history indicator matrices for the days between f and l."""
    T = design.T
    days = np.arange(T)[None, :]
    inside = (days >= first[:, None]) & (days <= last[:, None])
    cap1 = (X == 1).astype(float)
    cap0 = ((X == 0) & design.capture[None, :] & inside).astype(float)
    n_res = (X == 2).sum(axis=1).astype(float)
    n_res_missed = ((X == 0) & design.resight[None, :] & inside).sum(axis=1).astype(float)
    return cap1, cap0, n_res, n_res_missed


def _log_middle(terms, dv, s):
    cap1, cap0, n_res, n_res_missed = terms
    return cap1 @ dv.log_p + cap0 @ dv.log_q + xlogy(n_res, s) + xlog1py(n_res_missed, -s)


def history_loglik(state, beta, design, x_h, bounds=None):
    """log P(x_h | theta), marginalizing group, arrival and departure."""
    x_h = np.asarray(x_h, dtype=np.int8)[None, :]
    if bounds is None:
        first = np.array([np.argmax(x_h[0] == 1)])
        last = np.array([design.T - 1 - np.argmax((x_h[0] > 0)[::-1])])
    else:
        first, last = np.array([bounds[0] - 1]), np.array([bounds[1] - 1])
    dv = detection_vectors(state.detection, design)
    mix, _, _ = _core_arrays(state, beta, design, dv)
    terms = _middle_terms(x_h, first, last, design)
    with np.errstate(divide="ignore"):
        return float(_log_middle(terms, dv, state.detection.s)[0] + np.log(mix[first[0], last[0]]))


def zero_history_loglik(state, beta, design):
    _, p0, _ = _core_arrays(state, beta, design)
    with np.errstate(divide="ignore"):
        return float(np.log(p0)) if p0 > 0 else -math.inf


def count_success_prob(state, beta, design, t):
    if design.occasion_type[t - 1] != "R":
        raise ValueError(f"day {t} is not a resight day")
    _, _, zeta = _core_arrays(state, beta, design)
    return float(zeta[t - 1])


@dataclass(frozen=True)
class OpenCore:
    """N-independent likelihood pieces for one parameter state."""

    beta: np.ndarray
    hist_sum: float  # sum_h n_h log P(x_h | theta)
    log_p0: float
    zeta: np.ndarray  # on resight days (0 elsewhere)


class OpenLikelihood:
    """Likelihood evaluator bound to one design and dataset.

    Derived quantities are cached on the parameter blocks: entry
    probabilities on the arrival block, detection vectors and per-history
    middle factors on the detection block, and the kernel output on the
    state.  Blocks are treated as immutable, so a changed block is a new
    object with an empty cache.
    """

    def __init__(self, design, data):
        self.design = design
        self.data = data
        self.T = design.T
        bounds = history_bounds(data)
        self.first = bounds.first - 1
        self.last = bounds.last - 1
        self.n = data.multiplicities.astype(float)
        self.D = data.D
        self.log_n_fact = float(gammaln(self.n + 1).sum())
        self.terms = _middle_terms(data.histories, self.first, self.last, design)
        self.resight_u8 = design.resight.astype(np.uint8)
        self._coef_cache = (None, 0.0)
        if data.counts is not None:
            mask = design.resight & (data.counts != MISSING)
            self.count_days = np.flatnonzero(mask)
            self.y = data.counts[self.count_days].astype(float)
            self.log_y_fact = gammaln(self.y + 1)
            self.y_max = float(self.y.max()) if self.y.size else 0.0
        else:
            self.count_days = np.zeros(0, dtype=np.int64)
            self.y = np.zeros(0)
            self.log_y_fact = np.zeros(0)
            self.y_max = 0.0

    def beta(self, arrival):
        cache = arrival.cache
        if cache is None or cache[0] != self.T:
            cache = arrival.cache = (self.T, entry_probabilities(arrival, self.T))
        return cache[1]

    def detection(self, det):
        cache = det.cache
        if cache is None or cache[0] is not self:
            dv = detection_vectors(det, self.design)
            with np.errstate(divide="ignore", invalid="ignore"):
                log_mid = _log_middle(self.terms, dv, det.s)
            cache = det.cache = (self, dv, log_mid)
        return cache[1], cache[2]

    def core(self, state):
        cache = state.cache
        if cache is None or cache[0] is not self:
            beta = self.beta(state.arrival)
            dv, log_mid = self.detection(state.detection)
            beh = state.behaviour
            mix, p0, zeta = kernels.open_core(
                beta, beh.pi, beh.phi0, float(beh.gamma_t), float(beh.gamma_a),
                dv.capfail, dv.nodet, self.resight_u8, float(state.detection.s),
            )
            with np.errstate(divide="ignore", invalid="ignore"):
                per_hist = log_mid + np.log(mix[self.first, self.last])
                hist_sum = float(self.n @ per_hist)
                log_p0 = float(np.log(p0)) if p0 > 0 else -math.inf
            if math.isnan(hist_sum):
                hist_sum = -math.inf
            cache = state.cache = (self, OpenCore(beta, hist_sum, log_p0, zeta))
        return cache[1]

    def marked(self, core, N):
        D = self.D
        if N < D:
            return -math.inf
        unseen = N - D
        zero_term = unseen * core.log_p0 if unseen > 0 else 0.0
        return (
            math.lgamma(N + 1) - self.log_n_fact - math.lgamma(unseen + 1)
            + core.hist_sum
            + zero_term
        )

    def _binomial_coefs(self, N):
        # sum_t log C(N, y_t); depends on N only, so remember the last one
        if self._coef_cache[0] != N:
            coef = float((gammaln(N + 1) - self.log_y_fact - gammaln(N - self.y + 1)).sum())
            self._coef_cache = (N, coef)
        return self._coef_cache[1]

    def counts(self, core, N):
        if self.y.size == 0:
            return 0.0
        if self.y_max > N:
            return -math.inf
        zeta = core.zeta[self.count_days]
        with np.errstate(divide="ignore", invalid="ignore"):
            total = float(xlogy(self.y, zeta).sum() + xlog1py(N - self.y, -zeta).sum())
        total += self._binomial_coefs(N)
        return -math.inf if math.isnan(total) else total

    def loglik(self, state):
        core = self.core(state)
        marked = self.marked(core, state.N)
        if marked == -math.inf:
            return -math.inf
        return marked + self.counts(core, state.N)


def marked_loglik(state, data, design):
    lik = OpenLikelihood(design, data)
    return lik.marked(lik.core(state), state.N)


def counts_loglik(state, data, design):
    lik = OpenLikelihood(design, data)
    return lik.counts(lik.core(state), state.N)


def open_log_likelihood(state, data, design):
    lik = OpenLikelihood(design, data)
    core = lik.core(state)
    return lik.marked(core, state.N) + lik.counts(core, state.N)
