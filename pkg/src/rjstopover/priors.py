"""Prior configuration, joint log-prior and birth-component draws.

The joint prior of a k-component proportion block carries the Dirichlet(1)
density (k-1)! and the label-symmetry factor k!, so the trans-dimensional
acceptance ratio can be written directly in terms of the posterior.
"""

import math
from dataclasses import asdict, dataclass, replace

import numpy as np

from .closed_model import ClosedParamState
from .open_model import OpenParamState

_LOG_2PI = math.log(2.0 * math.pi)


def coefficient_sd(n_covariates):
    """Prior sd of logistic-regression coefficients: variance pi^2 / (3(n+1))."""
    return math.pi / math.sqrt(3.0 * (n_covariates + 1))


@dataclass(frozen=True)
class PriorConfig:
    family: str = "open"
    M_max: int = 20
    G_max: int = 15
    G_prior: str = "shifted_poisson"  # or "uniform"
    G_mean: float = 1.0  # mean of G - 1 under the shifted Poisson
    N_prior: str = "normal"  # or "reciprocal"
    N_mean: float = 55000.0
    N_sd: float = 10000.0
    N_max: int = None  # reciprocal prior upper bound; None -> 10 * D
    mu_mean: float = None  # None -> T / 2
    mu_sd: float = None  # None -> T / 2
    sigma_low: float = 0.1
    sigma_high: float = None  # None -> T
    retention_covariates: int = 2
    capture_covariates: int = 3
    s_a: float = 1.0
    s_b: float = 1.0
    T: int = None
    D: int = None

    def __post_init__(self):
        if self.family not in ("open", "closed"):
            raise ValueError(f"unknown model family {self.family!r}")
        if self.sigma_low <= 0:
            raise ValueError("sigma_low must be > 0")
        for name, value in asdict(self).items():
            if isinstance(value, float) and not math.isfinite(value):
                raise ValueError(f"prior hyperparameter {name} must be finite")

    def resolve(self, T, D):
        """Fill data-dependent defaults."""
        updates = {"T": T, "D": D}
        if self.family == "open":
            if self.mu_mean is None:
                updates["mu_mean"] = T / 2.0
            if self.mu_sd is None:
                updates["mu_sd"] = T / 2.0
            if self.sigma_high is None:
                updates["sigma_high"] = float(T)
        elif self.N_max is None:
            updates["N_max"] = 10 * D
        return replace(self, **updates)

    @property
    def retention_sd(self):
        return coefficient_sd(self.retention_covariates)

    @property
    def capture_sd(self):
        return coefficient_sd(self.capture_covariates)

    def to_dict(self):
        return asdict(self)


def open_priors(**overrides):
    return PriorConfig(family="open", **overrides)


def closed_priors(**overrides):
    base = dict(family="closed", G_max=10, G_prior="uniform", N_prior="reciprocal")
    base.update(overrides)
    return PriorConfig(**base)


def _normal_logpdf(x, mean, sd):
    z = (x - mean) / sd
    return -0.5 * z * z - math.log(sd) - 0.5 * _LOG_2PI


def log_count_prior(k, config):
    """Log prior mass of a component count (G for either family)."""
    if not 1 <= k <= config.G_max:
        return -math.inf
    if config.G_prior == "uniform":
        return -math.log(config.G_max)
    lam = config.G_mean
    return (k - 1) * math.log(lam) - lam - math.lgamma(k)


def log_proportion_prior(props):
    """Dirichlet(1) density times the k! label-symmetry factor."""
    values = np.asarray(props, dtype=float).tolist()
    if min(values) < 0.0 or abs(math.fsum(values) - 1.0) > 1e-9:
        return -math.inf
    k = len(values)
    return math.lgamma(k) + math.lgamma(k + 1)


def log_prior(state, config):
    if isinstance(state, OpenParamState):
        return _open_log_prior(state, config)
    if isinstance(state, ClosedParamState):
        return _closed_log_prior(state, config)
    raise TypeError(f"unsupported state type {type(state).__name__}")


def _sum_normal_logpdf(values, mean, sd):
    ss = 0.0
    for v in values:
        ss += (v - mean) * (v - mean)
    return -0.5 * ss / (sd * sd) - len(values) * (math.log(sd) + 0.5 * _LOG_2PI)


def _open_log_prior(state, config):
    arr, beh, det = state.arrival, state.behaviour, state.detection
    M, G = arr.M, beh.G
    if not 1 <= M <= config.M_max:
        return -math.inf
    sigma = arr.sigma.tolist()
    if min(sigma) <= config.sigma_low or max(sigma) >= config.sigma_high:
        return -math.inf
    if not 0.0 <= det.s <= 1.0 or state.N < 0:
        return -math.inf
    if config.D is not None and state.N < config.D:
        return -math.inf
    total = -math.log(config.M_max) + log_count_prior(G, config)
    total += log_proportion_prior(arr.w) + log_proportion_prior(beh.pi)
    if total == -math.inf:
        return total
    total += _sum_normal_logpdf(arr.mu.tolist(), config.mu_mean, config.mu_sd)
    total -= M * math.log(config.sigma_high - config.sigma_low)
    rsd, csd = config.retention_sd, config.capture_sd
    total += _sum_normal_logpdf(beh.phi0.tolist() + [beh.gamma_t, beh.gamma_a], 0.0, rsd)
    total += _sum_normal_logpdf([det.cap0, det.cap_e, det.cap_loc2, det.cap_loc3], 0.0, csd)
    if config.s_a != 1.0 or config.s_b != 1.0:
        if det.s in (0.0, 1.0):
            return -math.inf
        total += (
            (config.s_a - 1) * math.log(det.s)
            + (config.s_b - 1) * math.log1p(-det.s)
            - (math.lgamma(config.s_a) + math.lgamma(config.s_b) - math.lgamma(config.s_a + config.s_b))
        )
    if config.N_prior == "normal":
        total += _normal_logpdf(state.N, config.N_mean, config.N_sd)
    else:
        total += _reciprocal_N(state.N, config)
    return total


def _reciprocal_N(N, config):
    lo = max(1, config.D or 1)
    hi = config.N_max if config.N_max is not None else math.inf
    if not lo <= N <= hi:
        return -math.inf
    return -math.log(N)


def _closed_log_prior(state, config):
    total = log_count_prior(state.G, config)
    if total == -math.inf:
        return total
    p = state.p.tolist()
    if min(p) <= 0.0 or max(p) >= 1.0:
        return -math.inf
    total += log_proportion_prior(state.pi)
    if config.N_prior == "reciprocal":
        total += _reciprocal_N(state.N, config)
    else:
        if config.D is not None and state.N < config.D:
            return -math.inf
        total += _normal_logpdf(state.N, config.N_mean, config.N_sd)
    return total


BIRTH_KINDS = ("arrival", "behaviour", "capture-group")


def sample_birth_component(kind, config, rng):
    """Draw the parameters of a new mixture component from its prior."""
    if kind == "arrival":
        mu = rng.normal(config.mu_mean, config.mu_sd)
        sigma = rng.uniform(config.sigma_low, config.sigma_high)
        return (float(mu), float(sigma))
    if kind == "behaviour":
        return (float(rng.normal(0.0, config.retention_sd)),)
    if kind == "capture-group":
        return (float(rng.uniform(0.0, 1.0)),)
    raise ValueError(f"unknown birth kind {kind!r}")


def birth_log_density(kind, params, config):
    """Log prior density of a birth component (the proposal density)."""
    if kind == "arrival":
        mu, sigma = params
        if not config.sigma_low < sigma < config.sigma_high:
            return -math.inf
        return _normal_logpdf(mu, config.mu_mean, config.mu_sd) - math.log(
            config.sigma_high - config.sigma_low
        )
    if kind == "behaviour":
        return _normal_logpdf(params[0], 0.0, config.retention_sd)
    if kind == "capture-group":
        return 0.0 if 0.0 < params[0] < 1.0 else -math.inf
    raise ValueError(f"unknown birth kind {kind!r}")
