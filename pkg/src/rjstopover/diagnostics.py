"""Convergence checks, model probabilities and posterior summaries.

Component labels are free during sampling.  For reporting, each state is
relabelled so arrival components run in increasing mu, behaviour groups in
increasing phi0 and closed-model capture groups in increasing p.
"""

import csv
import io
import math
import re
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .closed_model import ClosedParamState
from .open_model import ArrivalMixture, BehaviourModel, OpenParamState, entry_probabilities, inv_logit


@dataclass(frozen=True)
class PosteriorSummary:
    mean: float
    sd: float
    lower: float
    upper: float
    n: int
    level: float = 0.95


def summarize(values, level=0.95):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise ValueError("cannot summarize an empty sample")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(values, [alpha, 1.0 - alpha])
    sd = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return PosteriorSummary(float(values.mean()), sd, float(lo), float(hi), int(values.size), level)


# -- model probabilities --------------------------------------------------------

def model_probabilities(trace):
    """Visit frequencies over (M, G); M is -1 for the closed model."""
    if len(trace) == 0:
        raise ValueError("empty trace")
    counts = Counter(zip(trace.M.tolist(), trace.G.tolist()))
    n = len(trace)
    return {key: counts[key] / n for key in sorted(counts)}


def marginal_probabilities(probs, axis):
    """Collapse a (M, G) table onto 'M' or 'G'."""
    pos = 0 if axis == "M" else 1
    out = {}
    for key, value in probs.items():
        out[key[pos]] = out.get(key[pos], 0.0) + value
    return dict(sorted(out.items()))


# -- Geweke ---------------------------------------------------------------------

@dataclass(frozen=True)
class GewekeResult:
    z: float
    degenerate: bool = False

    @property
    def ok(self):
        return not self.degenerate and abs(self.z) < 1.96


def _batch_mean_var(x):
    """Variance of the window mean by non-overlapping batch means."""
    n = x.shape[0]
    b = int(math.isqrt(n))
    size = n // b
    means = x[: b * size].reshape(b, size).mean(axis=1)
    return float(means.var(ddof=1)) / b


def geweke_z(series, first_frac=0.1, last_frac=0.5):
    """Early-versus-late window z-score with batch-means variances."""
    x = np.asarray(series, dtype=float)
    n = x.shape[0]
    if n < 100:
        raise ValueError("Geweke diagnostic needs at least 100 values")
    if not (0 < first_frac < 1 and 0 < last_frac < 1 and first_frac + last_frac <= 1):
        raise ValueError("window fractions must be in (0, 1) and not overlap")
    a = x[: int(first_frac * n)]
    b = x[n - int(last_frac * n):]
    va, vb = _batch_mean_var(a), _batch_mean_var(b)
    if va == 0.0 or vb == 0.0:
        return GewekeResult(math.nan, degenerate=True)
    return GewekeResult(float((a.mean() - b.mean()) / math.sqrt(va + vb)))


# -- relabelling ----------------------------------------------------------------

def sorted_state(state):
    """Reporting-time relabelling; the state itself is left untouched."""
    if isinstance(state, ClosedParamState):
        order = np.argsort(state.p, kind="stable")
        return ClosedParamState(state.pi[order], state.p[order], state.N)
    a, b = state.arrival, state.behaviour
    ia = np.argsort(a.mu, kind="stable")
    ib = np.argsort(b.phi0, kind="stable")
    return OpenParamState(
        state.N,
        ArrivalMixture(a.w[ia], a.mu[ia], a.sigma[ia]),
        BehaviourModel(b.pi[ib], b.phi0[ib], b.gamma_t, b.gamma_a),
        state.detection,
    )


_INDEXED = re.compile(r"^(w|mu|sigma|pi|phi0|p)\[(\d+)\]$")


def quantity(state, name):
    """Value of a named quantity on a (sorted) state, e.g. 'N', 'mu[2]'."""
    m = _INDEXED.match(name)
    if m is None:
        if name == "N":
            return float(state.N)
        if name in ("gamma_t", "gamma_a"):
            return float(getattr(state.behaviour, name))
        if name in ("cap0", "cap_e", "cap_loc2", "cap_loc3", "s"):
            return float(getattr(state.detection, name))
        raise KeyError(f"unknown quantity {name!r}")
    block, idx = m.group(1), int(m.group(2)) - 1
    if isinstance(state, ClosedParamState):
        source = {"pi": state.pi, "p": state.p}
    else:
        source = {
            "w": state.arrival.w, "mu": state.arrival.mu, "sigma": state.arrival.sigma,
            "pi": state.behaviour.pi, "phi0": state.behaviour.phi0,
        }
    if block not in source:
        raise KeyError(f"quantity {name!r} does not apply to this model")
    values = source[block]
    if not 0 <= idx < values.shape[0]:
        raise KeyError(f"quantity {name!r} out of range for a state with {values.shape[0]} components")
    return float(values[idx])


def default_quantities(model, M=None, G=None):
    names = ["N"]
    if model == "open":
        names += ["gamma_t", "gamma_a", "cap0", "cap_e", "cap_loc2", "cap_loc3", "s"]
        if M is not None:
            for m in range(1, M + 1):
                names += [f"w[{m}]", f"mu[{m}]", f"sigma[{m}]"]
        if G is not None:
            for g in range(1, G + 1):
                names += [f"pi[{g}]", f"phi0[{g}]"]
    elif G is not None:
        for g in range(1, G + 1):
            names += [f"pi[{g}]", f"p[{g}]"]
    return names


def conditional_summary(trace, M=None, G=None, quantities=None, level=0.95):
    """Summaries over the sub-trace matching the (M, G) condition."""
    sub = trace.where(M=M, G=G)
    if len(sub) == 0:
        raise ValueError(f"no retained states with M={M}, G={G}")
    names = quantities or default_quantities(trace.model, M, G)
    states = [sorted_state(s) for s in sub.states]
    return {name: summarize([quantity(s, name) for s in states], level) for name in names}


def model_averaged_entry(trace, T, level=0.95):
    """Per-day summaries of the entry probabilities pooled over all states."""
    if trace.model != "open":
        raise ValueError("entry probabilities exist only for the open model")
    if len(trace) == 0:
        raise ValueError("empty trace")
    B = np.array([entry_probabilities(s.arrival, T) for s in trace.states])
    return [summarize(B[:, t], level) for t in range(T)], B


def retention_group_density(trace, t, a, G):
    """Rows of (draw, group, phi, pi) for states with G groups, groups sorted."""
    sub = trace.where(G=G)
    if len(sub) == 0:
        raise ValueError(f"no retained states with G={G}")
    rows = []
    for i, state in enumerate(sub.states):
        beh = sorted_state(state).behaviour
        for g in range(G):
            phi = inv_logit(beh.phi0[g] + beh.gamma_t * t + beh.gamma_a * a)
            rows.append((i, g + 1, phi, float(beh.pi[g])))
    return rows


# -- CSV helpers ----------------------------------------------------------------

def _csv(rows, head, header=None):
    buf = io.StringIO()
    if header:
        buf.write(header)
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(head)
    writer.writerows(rows)
    return buf.getvalue()


def model_probs_csv(probs, header=None):
    return _csv([(m, g, repr(p)) for (m, g), p in probs.items()], ["M", "G", "probability"], header)


def summaries_csv(summaries, header=None, extra=None):
    """``summaries``: {name: PosteriorSummary}; ``extra`` prefixes each row (e.g. M, G)."""
    extra = extra or {}
    head = list(extra) + ["quantity", "mean", "sd", "lower", "upper", "n"]
    rows = [
        list(extra.values()) + [name, repr(s.mean), repr(s.sd), repr(s.lower), repr(s.upper), s.n]
        for name, s in summaries.items()
    ]
    return _csv(rows, head, header)
