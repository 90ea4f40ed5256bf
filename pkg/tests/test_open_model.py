import math

import numpy as np
import pytest
from scipy import integrate, stats

from rjstopover import oracle
from rjstopover.data import ObservedData, make_design, history_from_string, MISSING
from rjstopover.open_model import (
    ArrivalMixture, BehaviourModel, DetectionModel, LatentHistory, OpenLikelihood, OpenParamState,
    capture_probability, count_success_prob, counts_loglik, entry_probabilities, history_loglik,
    latent_history_logprob, marked_loglik, open_log_likelihood, retention_probability,
    zero_history_loglik,
)

from conftest import random_history, random_open_instance, random_open_state


def state_with(T, phi0=0.0, det=None, M=1, mu=None):
    arrival = ArrivalMixture(np.ones(M) / M, mu if mu is not None else np.linspace(1, T, M), np.ones(M) * 2)
    return OpenParamState(10, arrival, BehaviourModel([1.0], [phi0]), det or DetectionModel())


# -- entry probabilities ------------------------------------------------------------

def test_entry_far_left_mass_in_first_cell():
    beta = entry_probabilities(ArrivalMixture([1.0], [-100.0], [1.0]), 38)
    assert beta[0] == pytest.approx(1.0, abs=1e-15)
    assert np.all(beta[1:] < 1e-15)


def test_entry_sums_to_one(rng):
    for _ in range(50):
        M = int(rng.integers(1, 5))
        arr = ArrivalMixture(rng.dirichlet(np.ones(M)), rng.uniform(-10, 50, M), rng.uniform(0.1, 20, M))
        beta = entry_probabilities(arr, int(rng.integers(2, 40)))
        assert abs(beta.sum() - 1.0) <= 1e-12 and beta.min() >= 0


def test_entry_matches_quadrature():
    arr = ArrivalMixture([0.4, 0.6], [5.0, 15.0], [2.0, 3.0])
    T = 20
    beta = entry_probabilities(arr, T)

    def density(x):
        return 0.4 * stats.norm.pdf(x, 5, 2) + 0.6 * stats.norm.pdf(x, 15, 3)

    ref = [integrate.quad(density, -np.inf, 1, epsabs=1e-14)[0]]
    ref += [integrate.quad(density, b - 1, b, epsabs=1e-14)[0] for b in range(2, T)]
    ref += [integrate.quad(density, T - 1, np.inf, epsabs=1e-14)[0]]
    assert np.max(np.abs(beta - np.array(ref))) <= 1e-8


def test_entry_single_day():
    assert entry_probabilities(ArrivalMixture([1.0], [3.0], [1.0]), 1).tolist() == [1.0]
    with pytest.raises(ValueError):
        entry_probabilities(ArrivalMixture([1.0], [3.0], [1.0]), 0)


# -- link functions -------------------------------------------------------------

def test_retention_values():
    beh = BehaviourModel([1.0], [0.0])
    assert retention_probability(beh, 1, 7, 3) == 0.5
    assert retention_probability(BehaviourModel([1.0], [1.0]), 1, 1, 1) == pytest.approx(
        1 / (1 + math.exp(-1)), rel=1e-15)
    falling = BehaviourModel([1.0], [2.0], gamma_t=-0.633)
    assert retention_probability(falling, 1, 20, 2) < retention_probability(falling, 1, 10, 2)
    extreme = BehaviourModel([1.0], [-700.0])
    assert 0 < retention_probability(extreme, 1, 1, 1) < 1e-300
    with pytest.raises(IndexError):
        retention_probability(beh, 2, 1, 1)
    with pytest.raises(IndexError):
        retention_probability(beh, 1, 0, 1)


def test_capture_probability_examples():
    design = make_design("CRC", [10.0, 0, 1.0], [2, 0, 1])
    assert capture_probability(DetectionModel(), design, 1) == 0.5
    det = DetectionModel(cap0=-2, cap_e=0.1, cap_loc2=0.5, cap_loc3=9.0)
    assert capture_probability(det, design, 1) == pytest.approx(1 / (1 + math.exp(0.5)), rel=1e-14)
    # location 1 is the baseline
    assert capture_probability(det, design, 3) == pytest.approx(1 / (1 + math.exp(1.9)), rel=1e-14)
    with pytest.raises(ValueError):
        capture_probability(det, design, 2)


# -- latent histories -----------------------------------------------------------

def test_latent_history_examples():
    T = 5
    state = state_with(T, phi0=0.0)
    beta = entry_probabilities(state.arrival, T)
    assert latent_history_logprob(state, beta, LatentHistory(1, 1, 3)) == pytest.approx(
        math.log(beta[0] * 0.25 * 0.5), rel=1e-14)
    assert latent_history_logprob(state, beta, LatentHistory(1, T, T)) == pytest.approx(math.log(beta[T - 1]))
    assert latent_history_logprob(state, beta, LatentHistory(1, 1, 1)) == pytest.approx(math.log(beta[0] * 0.5))
    with pytest.raises(ValueError):
        latent_history_logprob(state, beta, LatentHistory(1, 4, 3))


def test_latent_probabilities_sum_to_one(rng):
    T = 6
    state = random_open_state(rng, T)
    beta = entry_probabilities(state.arrival, T)
    total = sum(
        math.exp(latent_history_logprob(state, beta, LatentHistory(g, b, d)))
        for g in range(1, state.G + 1) for b in range(1, T + 1) for d in range(b, T + 1)
    )
    assert total == pytest.approx(1.0, abs=1e-12)


# -- history likelihoods ------------------------------------------------------------

def test_single_capture_day():
    design = make_design("C", [1.0], [1])
    det = DetectionModel(cap0=0.3)
    state = OpenParamState(5, ArrivalMixture([1.0], [1.0], [1.0]), BehaviourModel([0.3, 0.7], [0.0, 1.0]), det)
    beta = entry_probabilities(state.arrival, 1)
    p = capture_probability(det, design, 1)
    assert history_loglik(state, beta, design, [1]) == pytest.approx(math.log(p), rel=1e-14)
    certain = OpenParamState(5, state.arrival, state.behaviour, DetectionModel(cap0=800.0))
    assert zero_history_loglik(certain, beta, design) == -math.inf


def test_histories_match_brute_force(rng):
    for _ in range(40):
        design, state, x = random_open_instance(rng)
        beta = entry_probabilities(state.arrival, design.T)
        fast = history_loglik(state, beta, design, x)
        slow = oracle.brute_history_loglik(state, design, x)
        assert fast == pytest.approx(slow, rel=1e-10)
        assert fast <= 0
        z_fast = math.exp(zero_history_loglik(state, beta, design))
        assert z_fast == pytest.approx(oracle.brute_zero_history_prob(state, design), rel=1e-10)


def test_zero_history_without_capture_is_certain(rng):
    for _ in range(10):
        design, state, _ = random_open_instance(rng)
        state.detection = DetectionModel(cap0=-1e4, s=0.5)
        beta = entry_probabilities(state.arrival, design.T)
        assert abs(zero_history_loglik(state, beta, design)) <= 1e-10


def test_zeta_examples(rng):
    design = make_design("RCR")
    det = DetectionModel(cap0=0.0, s=0.35)
    state = OpenParamState(3, ArrivalMixture([1.0], [1.5], [1.0]), BehaviourModel([1.0], [0.5]), det)
    beta = entry_probabilities(state.arrival, 3)
    assert count_success_prob(state, beta, design, 1) == pytest.approx(beta[0] * 0.35, rel=1e-14)
    no_resight = OpenParamState(3, state.arrival, state.behaviour, DetectionModel(s=0.0))
    assert count_success_prob(no_resight, beta, design, 3) == 0.0
    with pytest.raises(ValueError):
        count_success_prob(state, beta, design, 2)
    for _ in range(20):
        design, state, _ = random_open_instance(rng)
        beta = entry_probabilities(state.arrival, design.T)
        for t in np.flatnonzero(design.resight) + 1:
            assert count_success_prob(state, beta, design, int(t)) == pytest.approx(
                oracle.brute_zeta(state, design, int(t)), rel=1e-10, abs=1e-300)


# -- data likelihoods ------------------------------------------------------------

def toy():
    design = make_design("CR")
    data = ObservedData(history_from_string("12")[None, :], np.array([1]), np.array([MISSING, 2]))
    state = OpenParamState(3, ArrivalMixture([1.0], [1.2], [0.8]), BehaviourModel([1.0], [0.4]),
                           DetectionModel(cap0=-0.2, s=0.3))
    return design, data, state


def test_marked_loglik_hand_expansion():
    design, data, state = toy()
    b0, b1 = entry_probabilities(state.arrival, 2)
    p = 1 / (1 + math.exp(0.2))
    phi = 1 / (1 + math.exp(-0.4))  # both slopes are zero
    # x = "12": arrive day 1, caught, stay to day 2, resighted
    px = b0 * p * phi * 0.3
    # never captured: arrive 1 and missed (stay or leave), or arrive 2
    p0 = b0 * (1 - p) + b1
    expected = math.log(3 * px * p0 ** 2)  # 3!/(1! 2!) = 3
    assert marked_loglik(state, data, design) == pytest.approx(expected, rel=1e-13)
    state.N = 0
    assert marked_loglik(state, data, design) == -math.inf


def test_marked_loglik_N_equals_D():
    design, data, state = toy()
    state.N = 1
    beta = entry_probabilities(state.arrival, 2)
    assert marked_loglik(state, data, design) == pytest.approx(
        history_loglik(state, beta, design, data.histories[0]), rel=1e-14)


def test_combinatorial_increment():
    design, data, state = toy()
    lik = OpenLikelihood(design, data)
    core = lik.core(state)
    for N in range(1, 8):
        step = lik.marked(core, N + 1) - lik.marked(core, N)
        assert step == pytest.approx(math.log(N + 1) - math.log(N + 1 - 1) + core.log_p0, rel=1e-12)


def test_counts_loglik_binomial():
    design = make_design("CR")
    data = ObservedData(history_from_string("10")[None, :], np.array([1]), np.array([MISSING, 3]))
    state = OpenParamState(10, ArrivalMixture([1.0], [1.5], [1.0]), BehaviourModel([1.0], [0.0]),
                           DetectionModel(s=0.5))
    lik = OpenLikelihood(design, data)
    core = lik.core(state)
    zeta = float(core.zeta[1])
    assert counts_loglik(state, data, design) == pytest.approx(stats.binom.logpmf(3, 10, zeta), rel=1e-13)
    assert lik.counts(core, 2) == -math.inf


def test_counts_zero_zeta():
    design = make_design("CR")
    state = OpenParamState(10, ArrivalMixture([1.0], [1.5], [1.0]), BehaviourModel([1.0], [0.0]),
                           DetectionModel(s=0.0))
    zero = ObservedData(history_from_string("10")[None, :], np.array([1]), np.array([MISSING, 0]))
    some = ObservedData(history_from_string("10")[None, :], np.array([1]), np.array([MISSING, 4]))
    assert counts_loglik(state, zero, design) == 0.0
    assert counts_loglik(state, some, design) == -math.inf


def test_counts_binomial_pmf_hand():
    # N=10, zeta=0.3, y=3 as a direct check of the pmf arithmetic
    value = math.log(math.comb(10, 3)) + 3 * math.log(0.3) + 7 * math.log(0.7)
    assert stats.binom.logpmf(3, 10, 0.3) == pytest.approx(value, rel=1e-14)


def random_dataset(rng, design, n_hist=4):
    rows = [random_history(rng, design) for _ in range(n_hist)]
    from rjstopover.data import merge_histories
    hist, mult = merge_histories(rows, rng.integers(1, 4, n_hist))
    counts = np.where(design.resight, rng.integers(0, 3, design.T), MISSING)
    return ObservedData(hist, mult, counts)


def test_open_loglik_is_sum_and_label_symmetric(rng):
    for _ in range(20):
        design, state, _ = random_open_instance(rng)
        data = random_dataset(rng, design)
        state.N = data.D + 5
        total = open_log_likelihood(state, data, design)
        assert total == marked_loglik(state, data, design) + counts_loglik(state, data, design)
        a, b = state.arrival, state.behaviour
        ia, ib = rng.permutation(a.M), rng.permutation(b.G)
        perm = OpenParamState(
            state.N,
            ArrivalMixture(a.w[ia], a.mu[ia], a.sigma[ia]),
            BehaviourModel(b.pi[ib], b.phi0[ib], b.gamma_t, b.gamma_a),
            state.detection,
        )
        assert open_log_likelihood(perm, data, design) == pytest.approx(total, rel=1e-12)


def test_cached_updates_match_recompute(rng):
    design = make_design("CRCRNCRC", np.ones(8), [1, 0, 2, 0, 0, 3, 0, 1])
    data = random_dataset(rng, design, 6)
    lik = OpenLikelihood(design, data)
    state = random_open_state(rng, design.T, N=data.D + 10)
    for _ in range(60):
        fresh = random_open_state(rng, design.T, N=data.D + int(rng.integers(0, 20)))
        which = rng.integers(4)
        arrival = fresh.arrival if which == 0 else state.arrival
        behaviour = fresh.behaviour if which == 1 else state.behaviour
        detection = fresh.detection if which == 2 else state.detection
        N = fresh.N if which == 3 else state.N
        state = OpenParamState(N, arrival, behaviour, detection)
        cached = lik.loglik(state)
        assert cached == pytest.approx(open_log_likelihood(state, data, design), rel=1e-13)


def test_cache_is_not_reused_across_datasets(rng):
    design = make_design("CRCRC")
    a, b = random_dataset(rng, design), random_dataset(rng, design)
    state = random_open_state(rng, 5, N=max(a.D, b.D) + 3)
    la, lb = OpenLikelihood(design, a), OpenLikelihood(design, b)
    va = la.loglik(state)
    vb = lb.loglik(state)
    assert va == open_log_likelihood(state, a, design)
    assert vb == open_log_likelihood(state, b, design)
