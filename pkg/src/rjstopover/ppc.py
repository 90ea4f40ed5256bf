"""Forward simulation and posterior-predictive checks.

Simulation follows the generative story of the open model animal by animal
(vectorized over animals, looping over days): behavioural group, arrival
day, daily retention, capture on capture days, resighting of marked animals
and counting of unmarked animals on resight days.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.stats import gaussian_kde

from .data import MISSING, ObservedData, merge_histories
from .diagnostics import sorted_state
from .open_model import OpenLikelihood, capture_linear_predictor, entry_probabilities


@dataclass
class SimulatedDataset:
    group: np.ndarray  # 1-based
    arrival: np.ndarray  # 1-based day b
    departure: np.ndarray  # 1-based last day present d
    histories: np.ndarray  # N x T, one row per animal (zero rows for never-captured)
    data: ObservedData

    @property
    def captured(self):
        return (self.histories == 1).any(axis=1)


def _expit(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def simulate_dataset(state, design, rng):
    """Simulate the N animals of the super-population under ``state``."""
    N, T = int(state.N), design.T
    if N < 0:
        raise ValueError("N must be non-negative")
    beh, det = state.behaviour, state.detection
    beta = entry_probabilities(state.arrival, T)
    g = rng.choice(beh.G, size=N, p=beh.pi / beh.pi.sum())
    b = rng.choice(T, size=N, p=beta / beta.sum()) + 1
    d = np.full(N, T, dtype=np.int64)
    leaving = np.ones(N, dtype=bool)
    for t in range(1, T):
        u = rng.random(N)
        here = leaving & (b <= t)
        phi = _expit(beh.phi0[g] + beh.gamma_t * t + beh.gamma_a * (t - b + 1))
        gone = here & (u >= phi)
        d[gone] = t
        leaving &= ~gone
    p = _expit(np.nan_to_num(capture_linear_predictor(det, design)))
    X = np.where(design.capture | design.resight, 0, MISSING).astype(np.int8)
    X = np.repeat(X[None, :], N, axis=0)
    marked = np.zeros(N, dtype=bool)
    counts = np.full(T, MISSING, dtype=np.int64)
    for t in range(T):
        u = rng.random(N)
        present = (b <= t + 1) & (t + 1 <= d)
        if design.capture[t]:
            caught = present & (u < p[t])
            X[caught, t] = 1
            marked |= caught
        elif design.resight[t]:
            seen = present & (u < det.s)
            X[seen & marked, t] = 2
            counts[t] = int((seen & ~marked).sum())
    rows = X[marked]
    if rows.shape[0]:
        hist, mult = merge_histories(list(rows), np.ones(rows.shape[0], dtype=np.int64))
    else:
        hist, mult = np.zeros((0, T), dtype=np.int8), np.zeros(0, dtype=np.int64)
    data = ObservedData(hist, mult, counts)
    return SimulatedDataset(g + 1, b, d, X, data)


def simulate_closed_dataset(state, T, rng):
    """Closed-population capture histories for N animals over T occasions."""
    N = int(state.N)
    g = rng.choice(state.G, size=N, p=state.pi / state.pi.sum())
    X = (rng.random((N, T)) < state.p[g][:, None]).astype(np.int8)
    rows = X[X.any(axis=1)]
    if rows.shape[0]:
        hist, mult = merge_histories(list(rows), np.ones(rows.shape[0], dtype=np.int64))
    else:
        hist, mult = np.zeros((0, T), dtype=np.int8), np.zeros(0, dtype=np.int64)
    return ObservedData(hist, mult, None)


def _pick_states(trace, draws, rng):
    n = len(trace)
    if n == 0:
        raise ValueError("empty trace")
    idx = rng.choice(n, size=draws, replace=draws > n)
    return [int(i) for i in idx]


def density_mode(values):
    """Mode of a Gaussian kernel density estimate on a fine grid."""
    values = np.asarray(values, dtype=float)
    if values.size < 2 or np.ptp(values) == 0:
        return float(values.mean())
    kde = gaussian_kde(values)
    grid = np.linspace(values.min(), values.max(), 2001)
    return float(grid[np.argmax(kde(grid))])


@dataclass
class LoglikCheck:
    rows: list  # (draw, iteration, loglik_real, loglik_sim)

    @property
    def real(self):
        return np.array([r[2] for r in self.rows])

    @property
    def simulated(self):
        return np.array([r[3] for r in self.rows])

    def mode_gap(self):
        """|mode(real) - mode(simulated)| in units of the pooled sd."""
        real, sim = self.real, self.simulated
        pooled = np.sqrt(0.5 * (real.var(ddof=1) + sim.var(ddof=1)))
        return abs(density_mode(real) - density_mode(sim)) / pooled


def gof_loglik_density(trace, data, design, draws=100, rng=None):
    """Log-likelihood of the real data and of a replicate, per sampled state."""
    rng = rng if rng is not None else np.random.default_rng(0)
    real_lik = OpenLikelihood(design, data)
    rows = []
    for k, i in enumerate(_pick_states(trace, draws, rng)):
        state = trace.states[i]
        sim = simulate_dataset(state, design, rng)
        real = real_lik.loglik(state)
        rows.append((k, trace.iterations[i], real, OpenLikelihood(design, sim.data).loglik(state)))
    return LoglikCheck(rows)


def first_caught(data, design):
    """Number of newly marked animals on each capture day."""
    first = np.argmax(data.histories == 1, axis=1)
    out = np.zeros(design.T, dtype=np.int64)
    np.add.at(out, first, data.multiplicities)
    return out[design.capture]


def unmarked_counts(data, design):
    if data.counts is None:
        return np.zeros(int(design.resight.sum()), dtype=np.int64)
    return data.counts[design.resight]


def tukey_whiskers(values):
    """Whisker ends of a box plot: extreme points within 1.5 IQR of the box."""
    values = np.asarray(values, dtype=float)
    q1, q3 = np.quantile(values, [0.25, 0.75])
    iqr = q3 - q1
    lo = values[values >= q1 - 1.5 * iqr].min()
    hi = values[values <= q3 + 1.5 * iqr].max()
    return float(lo), float(hi)


@dataclass
class OccasionStats:
    capture_days: np.ndarray  # 1-based
    resight_days: np.ndarray
    first_caught: np.ndarray  # draws x capture days
    unmarked: np.ndarray  # draws x resight days
    real_first_caught: np.ndarray
    real_unmarked: np.ndarray

    @property
    def columns(self):
        return self.capture_days.size + self.resight_days.size

    def covered(self):
        """Per-occasion flags: real value within the simulated whiskers."""
        out = []
        for sims, real in ((self.first_caught, self.real_first_caught), (self.unmarked, self.real_unmarked)):
            for j in range(sims.shape[1]):
                lo, hi = tukey_whiskers(sims[:, j])
                out.append(lo <= real[j] <= hi)
        return np.array(out, dtype=bool)

    def coverage(self):
        flags = self.covered()
        return float(flags.mean()) if flags.size else 1.0


def gof_occasion_stats(trace, data, design, draws=100, rng=None):
    """Simulated first-capture and unmarked-count statistics per occasion."""
    rng = rng if rng is not None else np.random.default_rng(0)
    fc, um = [], []
    for i in _pick_states(trace, draws, rng):
        sim = simulate_dataset(trace.states[i], design, rng).data
        fc.append(first_caught(sim, design))
        um.append(unmarked_counts(sim, design))
    return OccasionStats(
        np.flatnonzero(design.capture) + 1,
        np.flatnonzero(design.resight) + 1,
        np.array(fc).reshape(draws, -1),
        np.array(um).reshape(draws, -1),
        first_caught(data, design),
        unmarked_counts(data, design),
    )


def observed_stopover_durations(trace, design, draws=100, rng=None, G=None):
    """Per-group mean and sd of d - b + 1 among animals captured at least once.

    Rows are (draw, group, mean, sd, detected); groups follow the sorted
    labelling (increasing phi0).
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    sub = trace.where(G=G) if G is not None else trace
    if len(sub) == 0:
        raise ValueError(f"no retained states with G={G}")
    rows = []
    for k, i in enumerate(_pick_states(sub, draws, rng)):
        state = sorted_state(sub.states[i])
        sim = simulate_dataset(state, design, rng)
        seen = sim.captured
        stay = sim.departure - sim.arrival + 1
        for g in range(1, state.G + 1):
            sel = seen & (sim.group == g)
            n = int(sel.sum())
            mean = float(stay[sel].mean()) if n else float("nan")
            sd = float(stay[sel].std(ddof=1)) if n > 1 else float("nan")
            rows.append((k, g, mean, sd, n))
    return rows


# -- CSV emission -------------------------------------------------------------------

def _csv(head, rows, header=None):
    buf = io.StringIO()
    if header:
        buf.write(header)
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(head)
    w.writerows(rows)
    return buf.getvalue()


def loglik_csv(check, header=None):
    rows = [(d, it, repr(float(a)), repr(float(b))) for d, it, a, b in check.rows]
    return _csv(["draw", "iteration", "loglik_real", "loglik_simulated"], rows, header)


def _occasion_csv(days, sims, real, header):
    head = ["draw"] + [f"day{d}" for d in days]
    rows = [["real"] + [int(v) for v in real]]
    rows += [[k] + [int(v) for v in row] for k, row in enumerate(sims)]
    return _csv(head, rows, header)


def first_caught_csv(stats, header=None):
    return _occasion_csv(stats.capture_days, stats.first_caught, stats.real_first_caught, header)


def unmarked_csv(stats, header=None):
    return _occasion_csv(stats.resight_days, stats.unmarked, stats.real_unmarked, header)


def durations_csv(rows, header=None):
    out = [(d, g, repr(m), repr(s), n) for d, g, m, s, n in rows]
    return _csv(["draw", "group", "mean_duration", "sd_duration", "detected"], out, header)
