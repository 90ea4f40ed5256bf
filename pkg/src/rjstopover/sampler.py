"""Reversible-jump MCMC engine.

Within-model parameters get single-site Gaussian random-walk updates;
mixing proportions get the pair update; component counts move by
birth/death steps whose acceptance follows the generic mixture ratio with
the Dirichlet and label-symmetry factors kept inside the log-prior.
"""

import logging
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .closed_model import ClosedLikelihood, ClosedParamState
from .open_model import (
    ArrivalMixture, BehaviourModel, DetectionModel, OpenLikelihood, OpenParamState,
)
from .priors import birth_log_density, log_prior, sample_birth_component
from .trace import ChainTrace

log = logging.getLogger(__name__)

OPEN_STEPS = {
    "mu": 1.0, "sigma": 0.5, "phi0": 0.3, "gamma_t": 0.02, "gamma_a": 0.05,
    "cap0": 0.1, "cap_e": 0.1, "cap_loc2": 0.1, "cap_loc3": 0.1, "s": 0.02, "N": 250.0,
}
CLOSED_STEPS = {"p": 0.05, "N": 5.0}
_STEP_CEILING = {"s": 0.5, "p": 0.5}


class NumericError(RuntimeError):
    """Cached and recomputed log-likelihoods disagree."""


@dataclass
class SamplerConfig:
    iterations: int = 10000
    burn_in: int = 2000
    thin: int = 1
    gamma_prop: float = 0.5
    step_sizes: dict = field(default_factory=dict)
    n_proposal: str = None  # "walk" (open default) or "poisson" (closed default)
    move_mix: dict = field(default_factory=lambda: {"M": 0.5, "G": 0.5})
    adapt: bool = True
    adapt_window: int = 50
    check_every: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.iterations < 1 or self.thin < 1 or self.burn_in < 0:
            raise ValueError("iterations and thin must be positive, burn_in non-negative")
        if self.burn_in >= self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if not 0.0 < self.gamma_prop < 1.0:
            raise ValueError("gamma_prop must lie in (0, 1)")
        if self.n_proposal not in (None, "walk", "poisson"):
            raise ValueError(f"unknown N proposal {self.n_proposal!r}")
        for key, value in self.move_mix.items():
            if key not in ("M", "G") or not 0.0 <= value <= 1.0:
                raise ValueError(f"move_mix entry {key}={value} invalid")

    def for_model(self, model):
        """Fill model-specific defaults (step sizes, N proposal)."""
        steps = dict(OPEN_STEPS if model == "open" else CLOSED_STEPS)
        steps.update(self.step_sizes)
        n_prop = self.n_proposal or ("walk" if model == "open" else "poisson")
        return replace(self, step_sizes=steps, n_proposal=n_prop)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TransitionProbs:
    """Birth/death proposal probabilities with reflecting boundaries."""

    k_min: int
    k_max: int

    def up(self, k):
        if k >= self.k_max:
            return 0.0
        if k <= self.k_min:
            return 1.0
        return 0.5

    def down(self, k):
        if self.k_min == self.k_max:
            return 0.0
        return 1.0 - self.up(k)


def _accept(log_ratio, rng):
    # one uniform per decision keeps the stream aligned across outcomes
    u = rng.random()
    if log_ratio >= 0.0:
        return True
    if log_ratio == -math.inf or math.isnan(log_ratio):
        return False
    return u < math.exp(log_ratio)


# -- parameter access ---------------------------------------------------------

def get_param(state, pid):
    if pid is None:
        return state
    if isinstance(pid, tuple):
        name, idx = pid
        if name in ("mu", "sigma"):
            return float(getattr(state.arrival, name)[idx])
        if name == "phi0":
            return float(state.behaviour.phi0[idx])
        if name == "p":
            return float(state.p[idx])
        raise KeyError(pid)
    if pid == "N":
        return state.N
    if pid in ("gamma_t", "gamma_a"):
        return getattr(state.behaviour, pid)
    return getattr(state.detection, pid)


def with_param(state, pid, value):
    """Copy of ``state`` with one parameter changed; untouched blocks are shared."""
    if pid is None:
        return value
    if isinstance(state, ClosedParamState):
        if pid == "N":
            new = ClosedParamState(state.pi, state.p, int(value))
            new.cache = state.cache
            return new
        name, idx = pid
        p = state.p.copy()
        p[idx] = value
        return ClosedParamState(state.pi, p, state.N)
    if pid == "N":
        new = OpenParamState(int(value), state.arrival, state.behaviour, state.detection)
        new.cache = state.cache
        return new
    arr, beh, det = state.arrival, state.behaviour, state.detection
    if isinstance(pid, tuple):
        name, idx = pid
        if name in ("mu", "sigma"):
            vals = {"w": arr.w, "mu": arr.mu.copy(), "sigma": arr.sigma.copy()}
            vals[name][idx] = value
            arr = ArrivalMixture(**vals)
        elif name == "phi0":
            phi0 = beh.phi0.copy()
            phi0[idx] = value
            beh = BehaviourModel(beh.pi, phi0, beh.gamma_t, beh.gamma_a)
        else:
            raise KeyError(pid)
    elif pid in ("gamma_t", "gamma_a"):
        beh = replace(beh, **{pid: float(value)})
    else:
        new_det = replace(det, **{pid: float(value)})
        det = new_det
    return OpenParamState(state.N, arr, beh, det)


def with_proportions(state, block, props, comp=None):
    """Replace a proportion block (and optionally its component parameters)."""
    if isinstance(state, ClosedParamState):
        p = state.p if comp is None else comp["p"]
        return ClosedParamState(props, p, state.N)
    if block == "w":
        arr = state.arrival
        mu = arr.mu if comp is None else comp["mu"]
        sigma = arr.sigma if comp is None else comp["sigma"]
        new_arr = ArrivalMixture(props, mu, sigma)
        return OpenParamState(state.N, new_arr, state.behaviour, state.detection)
    beh = state.behaviour
    phi0 = beh.phi0 if comp is None else comp["phi0"]
    return OpenParamState(
        state.N, state.arrival, BehaviourModel(props, phi0, beh.gamma_t, beh.gamma_a), state.detection
    )


def strip_caches(state):
    """Deep copy without any cached likelihood pieces."""
    if isinstance(state, ClosedParamState):
        return ClosedParamState(state.pi.copy(), state.p.copy(), state.N)
    a, b, d = state.arrival, state.behaviour, state.detection
    return OpenParamState(
        state.N,
        ArrivalMixture(a.w.copy(), a.mu.copy(), a.sigma.copy()),
        BehaviourModel(b.pi.copy(), b.phi0.copy(), b.gamma_t, b.gamma_a),
        DetectionModel(d.cap0, d.cap_e, d.cap_loc2, d.cap_loc3, d.s),
    )


# -- moves --------------------------------------------------------------------

def mh_scalar_update(state, target, pid, step, rng, current=None):
    """Gaussian random-walk Metropolis update of one scalar parameter.

    Returns ``(state, accepted, log_target)``.  ``pid=None`` treats the
    state itself as the scalar.
    """
    if current is None:
        current = target(state)
    x = get_param(state, pid)
    proposal = with_param(state, pid, x + step * rng.standard_normal())
    new = target(proposal)
    if _accept(new - current, rng):
        return proposal, True, new
    return state, False, current


def _pick(k, rng):
    # uniform index in 0..k-1 from a single double
    return min(int(rng.random() * k), k - 1)


def _pick_pair(k, rng):
    """Ordered pair of distinct uniform indices."""
    a = _pick(k, rng)
    b = _pick(k - 1, rng)
    return a, b + (b >= a)


def propose_pair(props, gamma, rng):
    """Pair proposal for a proportion vector; None if it leaves the simplex."""
    k = props.shape[0]
    a, b = _pick_pair(k, rng)
    total = props[a] + props[b]
    eps = gamma * total
    x = eps * (2.0 * rng.random() - 1.0)
    new_a = props[a] + x
    new_b = props[b] - x
    if new_a < 0.0 or new_b < 0.0 or new_a > total:
        return None
    out = props.copy()
    out[a] = new_a
    out[b] = new_b
    return out


def proportion_pair_update(props, gamma_prop, target, rng, current=None):
    """Pair update of mixing proportions; ``target`` maps proportions to log density.

    Returns ``(props, accepted, log_target)``.  A single-component vector is
    returned unchanged.
    """
    props = np.asarray(props, dtype=float)
    if props.shape[0] < 2:
        return props, False, current
    if current is None:
        current = target(props)
    proposal = propose_pair(props, gamma_prop, rng)
    if proposal is None:
        rng.random()  # keep one uniform per proposal
        return props, False, current
    new = target(proposal)
    if _accept(new - current, rng):
        return proposal, True, new
    return props, False, current


def birth_log_ratio(logpost_old, logpost_new, k, donor_mass, log_q_new, trans):
    """Log of the (untruncated) acceptance argument for a k -> k+1 birth."""
    num = logpost_new + math.log(trans.down(k + 1)) - math.log(k + 1) - math.log(k)
    den = logpost_old + math.log(trans.up(k)) - math.log(k) - math.log(donor_mass) + log_q_new
    return num - den


def death_log_ratio(logpost_old, logpost_new, k, merged_mass, log_q_removed, trans):
    """Log of the (untruncated) acceptance argument for a k -> k-1 death."""
    num = (
        logpost_new + math.log(trans.up(k - 1)) - math.log(k - 1)
        - math.log(merged_mass) + log_q_removed
    )
    den = logpost_old + math.log(trans.down(k)) - math.log(k) - math.log(k - 1)
    return num - den


_BLOCK = {"M": ("w", "arrival"), "G": ("pi", "behaviour")}


def _components(state, kind):
    """(proportions, {param: array}, birth kind) for the block that ``kind`` moves."""
    if isinstance(state, ClosedParamState):
        return state.pi, {"p": state.p}, "capture-group"
    if kind == "M":
        a = state.arrival
        return a.w, {"mu": a.mu, "sigma": a.sigma}, "arrival"
    b = state.behaviour
    return b.pi, {"phi0": b.phi0}, "behaviour"


def _block_name(state, kind):
    if isinstance(state, ClosedParamState):
        return "pi"
    return _BLOCK[kind][0]


def birth_move(state, kind, priors, trans, rng, target, current=None):
    """Split mass off a random donor to create a new component drawn from its prior.

    Returns ``(state, accepted, log_target)``.
    """
    if current is None:
        current = target(state)
    props, comps, birth_kind = _components(state, kind)
    k = props.shape[0]
    if trans.up(k) == 0.0:
        raise ValueError(f"birth proposed at the component cap k={k}")
    a = _pick(k, rng)
    x = props[a] * rng.random()
    params = sample_birth_component(birth_kind, priors, rng)
    new_props = np.append(props, x)
    new_props[a] = props[a] - x
    new_comp = {name: np.append(vals, v) for (name, vals), v in zip(comps.items(), params)}
    proposal = with_proportions(state, _block_name(state, kind), new_props, new_comp)
    if props[a] <= 0.0:
        rng.random()
        return state, False, current
    new = target(proposal)
    ratio = birth_log_ratio(current, new, k, props[a], birth_log_density(birth_kind, params, priors), trans)
    if _accept(ratio, rng):
        return proposal, True, new
    return state, False, current


def death_move(state, kind, priors, trans, rng, target, current=None):
    """Remove a random component and give its mass to another random component."""
    if current is None:
        current = target(state)
    props, comps, birth_kind = _components(state, kind)
    k = props.shape[0]
    if k < 2:
        raise ValueError("death needs at least two components")
    a, b = _pick_pair(k, rng)
    merged = props[a] + props[b]
    new_props = props.copy()
    new_props[b] = merged
    new_props = np.delete(new_props, a)
    removed = tuple(float(vals[a]) for vals in comps.values())
    new_comp = {name: np.delete(vals, a) for name, vals in comps.items()}
    proposal = with_proportions(state, _block_name(state, kind), new_props, new_comp)
    new = target(proposal)
    ratio = death_log_ratio(current, new, k, merged, birth_log_density(birth_kind, removed, priors), trans)
    if _accept(ratio, rng):
        return proposal, True, new
    return state, False, current


def _log_poisson(k, lam):
    return k * math.log(lam) - lam - math.lgamma(k + 1)


def update_N(state, target, rng, D, proposal="walk", halfwidth=250, N_max=None, current=None):
    """Integer update of the population size.

    ``proposal="poisson"`` draws N' ~ Poisson(N) and includes the Hastings
    correction; ``"walk"`` draws N' uniformly from N-h..N+h.  Proposals
    below D (or above N_max) are rejected without evaluating the target.
    """
    if current is None:
        current = target(state)
    N = state.N
    if proposal == "poisson":
        new_N = int(rng.poisson(N))
    else:
        h = max(1, int(round(halfwidth)))
        new_N = N + int(rng.integers(-h, h + 1))
    if new_N < D or (N_max is not None and new_N > N_max):
        rng.random()
        return state, False, current
    if new_N == N:
        rng.random()
        return state, True, current
    candidate = with_param(state, "N", new_N)
    new = target(candidate)
    ratio = new - current
    if proposal == "poisson":
        ratio += _log_poisson(N, new_N) - _log_poisson(new_N, N)
    if _accept(ratio, rng):
        return candidate, True, new
    return state, False, current


# -- step-size adaptation ------------------------------------------------------

class StepTuner:
    """Windowed controller pushing random-walk acceptance into [low, high].

    After every ``window`` iterations, each step whose window acceptance is
    outside the band is scaled by exp(+-delta) with delta shrinking as
    1/sqrt(round); steps already inside the band are left alone.
    """

    def __init__(self, steps, low=0.2, high=0.4, window=50):
        self.steps = dict(steps)
        self.low, self.high, self.window = low, high, window
        self.rounds = 0
        self._prop = {k: 0 for k in self.steps}
        self._acc = {k: 0 for k in self.steps}
        self._ticks = 0

    def record(self, key, accepted):
        self._prop[key] += 1
        self._acc[key] += int(accepted)

    def tick(self):
        self._ticks += 1
        if self._ticks % self.window:
            return
        self.rounds += 1
        delta = min(1.0, 2.0 / math.sqrt(self.rounds))
        for key in self.steps:
            n = self._prop[key]
            if n >= 10:
                rate = self._acc[key] / n
                if rate < self.low:
                    self.steps[key] *= math.exp(-delta * (self.low - rate) / self.low)
                elif rate > self.high:
                    self.steps[key] *= math.exp(delta * (rate - self.high) / (1.0 - self.high))
                if key in _STEP_CEILING:
                    self.steps[key] = min(self.steps[key], _STEP_CEILING[key])
                if key == "N":
                    self.steps[key] = max(self.steps[key], 1.0)
            self._prop[key] = 0
            self._acc[key] = 0


# -- chain driver ---------------------------------------------------------------

class Posterior:
    """Unnormalized log posterior; the prior is checked before the likelihood."""

    def __init__(self, lik, priors):
        self.lik = lik
        self.priors = priors

    def __call__(self, state):
        lp = log_prior(state, self.priors)
        if lp == -math.inf:
            return -math.inf
        return lp + self.lik.loglik(state)

    def parts(self, state):
        return self.lik.loglik(state), log_prior(state, self.priors)


@dataclass
class ChainState:
    state: object
    logpost: float
    iteration: int = 0
    counters: dict = field(default_factory=dict)

    def record(self, key, accepted):
        c = self.counters.setdefault(key, [0, 0])
        c[0] += 1
        c[1] += int(accepted)


def default_initial_state(model, data, design, priors):
    D = data.D
    if model == "closed":
        return ClosedParamState([1.0], [0.2], min(max(2 * D, D + 1), priors.N_max or 10 * D))
    T = design.T
    y_max = int(data.counts.max()) if data.counts is not None and data.counts.size else 0
    N0 = max(2 * D, D + 2 * y_max, 10)
    if priors.N_prior == "normal":
        N0 = max(N0, D)
    return OpenParamState(
        int(N0),
        ArrivalMixture([1.0], [T / 2.0], [max(T / 4.0, 2 * priors.sigma_low)]),
        BehaviourModel([1.0], [0.0], 0.0, 0.0),
        DetectionModel(-2.0, 0.0, 0.0, 0.0, 0.3),
    )


def acceptance_summary(counters):
    out = {}
    for key in sorted(counters):
        prop, acc = counters[key]
        out[key] = {"proposed": prop, "accepted": acc, "rate": acc / prop if prop else None}
    return out


class Chain:
    """One RJMCMC chain bound to a model, dataset and configuration."""

    def __init__(self, model, data, design, priors, config, init=None):
        if model not in ("open", "closed"):
            raise ValueError(f"unknown model {model!r}")
        self.model = model
        self.data = data
        self.design = design
        self.priors = priors.resolve(design.T, data.D)
        self.config = config.for_model(model)
        self.lik = OpenLikelihood(design, data) if model == "open" else ClosedLikelihood(data)
        self.target = Posterior(self.lik, self.priors)
        self.rng = np.random.default_rng(self.config.seed)
        self.D = data.D
        start = init if init is not None else default_initial_state(model, data, design, self.priors)
        lp = self.target(start)
        if lp == -math.inf:
            raise ValueError("initial state has zero posterior density")
        self.cs = ChainState(start, lp)
        self.steps = dict(self.config.step_sizes)
        self.tuner = StepTuner(self.steps, window=self.config.adapt_window)
        g_max = self.priors.G_max
        self.trans = {"G": TransitionProbs(1, g_max)}
        if model == "open":
            self.trans["M"] = TransitionProbs(1, self.priors.M_max)

    # single moves -----------------------------------------------------------

    def _scalar(self, key, pid):
        cs = self.cs
        cs.state, acc, cs.logpost = mh_scalar_update(
            cs.state, self.target, pid, self.steps[key], self.rng, cs.logpost
        )
        cs.record(key, acc)
        self.tuner.record(key, acc)

    def _proportions(self, kind):
        cs = self.cs
        block = _block_name(cs.state, kind)
        k = _components(cs.state, kind)[0].shape[0]
        for _ in range(k - 1):
            state = cs.state
            built = {}

            def target(p, state=state, built=built):
                built["state"] = with_proportions(state, block, p)
                return self.target(built["state"])

            props = _components(state, kind)[0]
            _, acc, cs.logpost = proportion_pair_update(
                props, self.config.gamma_prop, target, self.rng, cs.logpost
            )
            if acc:
                cs.state = built["state"]
            cs.record(block, acc)

    def _N(self):
        cs = self.cs
        halfwidth = self.steps.get("N", 1.0)
        N_max = self.priors.N_max if self.priors.N_prior == "reciprocal" else None
        cs.state, acc, cs.logpost = update_N(
            cs.state, self.target, self.rng, self.D, self.config.n_proposal, halfwidth, N_max, cs.logpost
        )
        cs.record("N", acc)
        if self.config.n_proposal == "walk":
            self.tuner.record("N", acc)

    def _jump(self, kind):
        cs = self.cs
        props, _, _ = _components(cs.state, kind)
        k = props.shape[0]
        trans = self.trans[kind]
        if trans.k_min == trans.k_max:
            return
        if self.rng.random() < trans.up(k):
            cs.state, acc, cs.logpost = birth_move(
                cs.state, kind, self.priors, trans, self.rng, self.target, cs.logpost
            )
            cs.record(f"{kind}_birth", acc)
        else:
            cs.state, acc, cs.logpost = death_move(
                cs.state, kind, self.priors, trans, self.rng, self.target, cs.logpost
            )
            cs.record(f"{kind}_death", acc)

    def sweep(self):
        """One within-model sweep followed by the trans-dimensional attempts."""
        st = self.cs.state
        if self.model == "open":
            for m in range(st.M):
                self._scalar("mu", ("mu", m))
                self._scalar("sigma", ("sigma", m))
            for g in range(st.G):
                self._scalar("phi0", ("phi0", g))
            for key in ("gamma_t", "gamma_a", "cap0", "cap_e", "cap_loc2", "cap_loc3", "s"):
                self._scalar(key, key)
            self._N()
            self._proportions("M")
            self._proportions("G")
            if self.rng.random() < self.config.move_mix.get("M", 0.0):
                self._jump("M")
            if self.rng.random() < self.config.move_mix.get("G", 0.0):
                self._jump("G")
        else:
            for g in range(st.G):
                self._scalar("p", ("p", g))
            self._N()
            self._proportions("G")
            if self.rng.random() < self.config.move_mix.get("G", 0.0):
                self._jump("G")
        self.cs.iteration += 1

    def check_cache(self):
        fresh = strip_caches(self.cs.state)
        value = self.target(fresh)
        cached = self.cs.logpost
        if not (value == cached or abs(value - cached) <= 1e-8 * max(1.0, abs(value))):
            raise NumericError(
                f"iteration {self.cs.iteration}: cached log-posterior {cached!r} "
                f"!= recomputed {value!r}"
            )

    def run(self, trace=None, progress_every=0):
        cfg = self.config
        trace = trace if trace is not None else ChainTrace(self.model)
        for it in range(1, cfg.iterations + 1):
            self.sweep()
            if it <= cfg.burn_in and cfg.adapt:
                self.tuner.tick()
                self.steps.update(self.tuner.steps)
            if cfg.check_every and it % cfg.check_every == 0:
                self.check_cache()
            if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                ll, lp = self.target.parts(self.cs.state)
                trace.append(it, self.cs.state, ll, lp)
            if progress_every and it % progress_every == 0:
                log.info("iteration %d logpost %.3f", it, self.cs.logpost)
        trace.meta.setdefault("seed", cfg.seed)
        trace.meta["acceptance"] = acceptance_summary(self.cs.counters)
        trace.meta["final_steps"] = dict(self.steps)
        return trace


def run_chain(model, data, design, priors, config, init=None):
    """Run one chain; returns the retained, thinned post-burn-in trace."""
    return Chain(model, data, design, priors, config, init).run()


def tune(model, data, design, priors, config, init=None):
    """Pilot run over the burn-in; returns a config with frozen tuned steps."""
    pilot_cfg = replace(config, iterations=max(config.burn_in, 1) + 1, burn_in=max(config.burn_in, 1), adapt=True)
    chain = Chain(model, data, design, priors, pilot_cfg, init)
    for _ in range(pilot_cfg.burn_in):
        chain.sweep()
        chain.tuner.tick()
        chain.steps.update(chain.tuner.steps)
    return replace(config, step_sizes=dict(chain.steps), adapt=False)
