"""Chain traces: in-memory container and self-describing CSV format.

One row per retained iteration.  Variable-length component blocks are
written as semicolon-joined lists inside a single cell; floats use Python's
shortest round-trip repr so a trace written twice from the same run is
byte-identical.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .closed_model import ClosedParamState
from .open_model import ArrivalMixture, BehaviourModel, DetectionModel, OpenParamState

OPEN_COLUMNS = [
    "iteration", "M", "G", "N", "w", "mu", "sigma", "pi", "phi0",
    "gamma_t", "gamma_a", "cap0", "cap_e", "cap_loc2", "cap_loc3", "s",
    "loglik", "logprior",
]
CLOSED_COLUMNS = ["iteration", "G", "N", "pi", "p", "loglik", "logprior"]
OPEN_SCALARS = ["N", "gamma_t", "gamma_a", "cap0", "cap_e", "cap_loc2", "cap_loc3", "s"]
CLOSED_SCALARS = ["N"]


def _f(x):
    return repr(float(x))


def _join(values):
    return ";".join(_f(v) for v in values)


def _split(text):
    return np.array([float(v) for v in text.split(";")]) if text else np.zeros(0)


def header_line(config_hash, seed):
    return f"# config_hash={config_hash} seed={seed}\n"


def parse_header(line):
    meta = {}
    for token in line.lstrip("#").split():
        if "=" in token:
            key, value = token.split("=", 1)
            meta[key] = value
    return meta


@dataclass
class ChainTrace:
    model: str
    iterations: list = field(default_factory=list)
    states: list = field(default_factory=list)
    loglik: list = field(default_factory=list)
    logprior: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    def append(self, iteration, state, loglik, logprior):
        if self.iterations and iteration <= self.iterations[-1]:
            raise ValueError("trace iterations must be strictly increasing")
        self.iterations.append(int(iteration))
        self.states.append(state)
        self.loglik.append(float(loglik))
        self.logprior.append(float(logprior))

    @property
    def G(self):
        return np.array([s.G for s in self.states], dtype=np.int64)

    @property
    def M(self):
        if self.model != "open":
            return np.full(len(self.states), -1, dtype=np.int64)
        return np.array([s.M for s in self.states], dtype=np.int64)

    @property
    def scalar_names(self):
        return OPEN_SCALARS if self.model == "open" else CLOSED_SCALARS

    def scalar(self, name):
        """Column of a fixed-dimension parameter across retained states."""
        if name == "N":
            return np.array([s.N for s in self.states], dtype=float)
        if name in ("gamma_t", "gamma_a"):
            return np.array([getattr(s.behaviour, name) for s in self.states], dtype=float)
        if name in ("cap0", "cap_e", "cap_loc2", "cap_loc3", "s"):
            return np.array([getattr(s.detection, name) for s in self.states], dtype=float)
        if name == "loglik":
            return np.asarray(self.loglik, dtype=float)
        if name == "logprior":
            return np.asarray(self.logprior, dtype=float)
        raise KeyError(f"unknown scalar {name!r}")

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        out = ChainTrace(self.model, meta=dict(self.meta))
        for keep, it, st, ll, lp in zip(mask, self.iterations, self.states, self.loglik, self.logprior):
            if keep:
                out.append(it, st, ll, lp)
        return out

    def where(self, M=None, G=None):
        mask = np.ones(len(self), dtype=bool)
        if M is not None:
            mask &= self.M == M
        if G is not None:
            mask &= self.G == G
        return self.subset(mask)

    # -- serialization -------------------------------------------------

    def _row(self, i):
        st, it = self.states[i], self.iterations[i]
        ll, lp = self.loglik[i], self.logprior[i]
        if self.model == "open":
            a, b, d = st.arrival, st.behaviour, st.detection
            return [
                str(it), str(a.M), str(b.G), str(int(st.N)),
                _join(a.w), _join(a.mu), _join(a.sigma), _join(b.pi), _join(b.phi0),
                _f(b.gamma_t), _f(b.gamma_a), _f(d.cap0), _f(d.cap_e),
                _f(d.cap_loc2), _f(d.cap_loc3), _f(d.s), _f(ll), _f(lp),
            ]
        return [str(it), str(st.G), str(int(st.N)), _join(st.pi), _join(st.p), _f(ll), _f(lp)]

    def to_csv(self):
        buf = io.StringIO()
        if "config_hash" in self.meta or "seed" in self.meta:
            buf.write(header_line(self.meta.get("config_hash", ""), self.meta.get("seed", "")))
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(OPEN_COLUMNS if self.model == "open" else CLOSED_COLUMNS)
        for i in range(len(self)):
            writer.writerow(self._row(i))
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def from_csv(cls, text):
        lines = text.splitlines()
        meta = {}
        while lines and lines[0].startswith("#"):
            meta.update(parse_header(lines.pop(0)))
        reader = csv.reader(lines)
        head = next(reader)
        if head == OPEN_COLUMNS:
            model = "open"
        elif head == CLOSED_COLUMNS:
            model = "closed"
        else:
            raise ValueError(f"unrecognized trace header: {','.join(head)}")
        trace = cls(model, meta=meta)
        for row in reader:
            rec = dict(zip(head, row))
            if model == "open":
                state = OpenParamState(
                    int(rec["N"]),
                    ArrivalMixture(_split(rec["w"]), _split(rec["mu"]), _split(rec["sigma"])),
                    BehaviourModel(
                        _split(rec["pi"]), _split(rec["phi0"]),
                        float(rec["gamma_t"]), float(rec["gamma_a"]),
                    ),
                    DetectionModel(
                        float(rec["cap0"]), float(rec["cap_e"]), float(rec["cap_loc2"]),
                        float(rec["cap_loc3"]), float(rec["s"]),
                    ),
                )
            else:
                state = ClosedParamState(_split(rec["pi"]), _split(rec["p"]), int(rec["N"]))
            trace.append(int(rec["iteration"]), state, float(rec["loglik"]), float(rec["logprior"]))
        return trace

    @classmethod
    def read(cls, path):
        with open(path, newline="") as fh:
            return cls.from_csv(fh.read())
