"""Study design and observed data: loading, validation and serialization.

File formats
------------
design     ``day,type,effort,location``; type in {C, R, N}; effort and
           location blank unless type is C.
histories  ``history,count``; history is a T-character string over
           {0, 1, 2, -} with ``-`` exactly on null days.
counts     ``day,count``; count blank exactly on non-resight days.
"""

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

CAPTURE, RESIGHT, NULL = "C", "R", "N"
MISSING = -1
_CODES = {"0": 0, "1": 1, "2": 2, "-": MISSING}
_CHARS = {v: k for k, v in _CODES.items()}


def _readonly(arr):
    arr.flags.writeable = False
    return arr


class DataError(ValueError):
    """Raised when a design or data file violates the data contract."""


@dataclass(frozen=True, eq=False)
class StudyDesign:
    occasion_type: tuple
    effort: np.ndarray  # nan where not a capture day
    location: np.ndarray  # 0 where not a capture day

    def __post_init__(self):
        T = len(self.occasion_type)
        if T < 1:
            raise DataError("design must contain at least one day")
        for t, kind in enumerate(self.occasion_type, start=1):
            if kind not in (CAPTURE, RESIGHT, NULL):
                raise DataError(f"day {t}: unknown occasion type {kind!r}")
            e, loc = self.effort[t - 1], self.location[t - 1]
            if kind == CAPTURE:
                if not np.isfinite(e) or e < 0:
                    raise DataError(f"day {t}: effort must be finite and >= 0")
                if loc not in (1, 2, 3):
                    raise DataError(f"day {t}: unknown location code {loc}")
            elif not np.isnan(e) or loc != 0:
                raise DataError(f"day {t}: effort/location given on a non-capture day")

    @property
    def T(self):
        return len(self.occasion_type)

    @cached_property
    def capture(self):
        return _readonly(np.array([k == CAPTURE for k in self.occasion_type]))

    @cached_property
    def resight(self):
        return _readonly(np.array([k == RESIGHT for k in self.occasion_type]))

    @property
    def K(self):
        return sum(k != NULL for k in self.occasion_type)

    def __eq__(self, other):
        return (
            isinstance(other, StudyDesign)
            and self.occasion_type == other.occasion_type
            and np.array_equal(self.effort, other.effort, equal_nan=True)
            and np.array_equal(self.location, other.location)
        )


@dataclass(eq=False)
class ObservedData:
    histories: np.ndarray  # H x T int8, MISSING on null days
    multiplicities: np.ndarray  # H, int64
    counts: np.ndarray = field(default=None)  # T, int64, MISSING where absent

    @property
    def H(self):
        return self.histories.shape[0]

    @property
    def D(self):
        return int(self.multiplicities.sum())

    def __eq__(self, other):
        if not isinstance(other, ObservedData):
            return NotImplemented
        same_counts = (self.counts is None and other.counts is None) or (
            self.counts is not None
            and other.counts is not None
            and np.array_equal(self.counts, other.counts)
        )
        return (
            np.array_equal(self.histories, other.histories)
            and np.array_equal(self.multiplicities, other.multiplicities)
            and same_counts
        )


@dataclass(frozen=True)
class HistoryBounds:
    first: np.ndarray  # 1-based day of first capture
    last: np.ndarray  # 1-based day of last detection


def make_design(types, effort=None, location=None):
    """Build a :class:`StudyDesign` from per-day type codes.

    ``effort``/``location`` are full-length sequences; entries on
    non-capture days are ignored.  Omitted, every capture day gets effort 1
    at location 1.
    """
    types = tuple(types)
    T = len(types)
    eff = np.full(T, np.nan)
    loc = np.zeros(T, dtype=np.int64)
    for t, kind in enumerate(types):
        if kind == CAPTURE:
            eff[t] = 1.0 if effort is None else float(effort[t])
            loc[t] = 1 if location is None else int(location[t])
    return StudyDesign(types, eff, loc)


def synthetic_design(T=38, n_null=9, seed=0):
    """Randomized capture/resight/null calendar shaped like a stopover study.

    Days alternate between capture and resight blocks with ``n_null``
    randomly placed null days; efforts are drawn on a unit scale and the
    three net locations rotate.
    """
    rng = np.random.default_rng(seed)
    null_days = set(rng.choice(np.arange(1, T), size=n_null, replace=False).tolist()) if n_null else set()
    types, effort, location = [], [], []
    k = 0
    for t in range(T):
        if t in null_days:
            types.append(NULL)
        else:
            types.append(CAPTURE if k % 2 == 0 else RESIGHT)
            k += 1
        effort.append(round(float(rng.uniform(0.5, 1.5)), 3))
        location.append(int(k // 6 % 3) + 1)
    return make_design(types, effort, location)


def history_from_string(text):
    try:
        return np.array([_CODES[ch] for ch in text], dtype=np.int8)
    except KeyError as exc:
        raise DataError(f"history {text!r}: invalid character {exc.args[0]!r}") from None


def history_to_string(row):
    return "".join(_CHARS[int(v)] for v in row)


def validate_history(row, design):
    """Check a single history against the design; raise DataError on failure."""
    label = history_to_string(row)
    if row.shape[0] != design.T:
        raise DataError(f"history {label!r}: length {row.shape[0]} != T={design.T}")
    cap, res = design.capture, design.resight
    null = ~(cap | res)
    if np.any((row == MISSING) != null):
        raise DataError(f"history {label!r}: missing entries must fall exactly on null days")
    if np.any((row == 1) & ~cap):
        raise DataError(f"history {label!r}: '1' on a non-capture day")
    if np.any((row == 2) & ~res):
        raise DataError(f"history {label!r}: '2' on a non-resight day")
    ones = np.flatnonzero(row == 1)
    if ones.size == 0:
        raise DataError(f"history {label!r}: no capture (the all-zero history is latent)")
    twos = np.flatnonzero(row == 2)
    if twos.size and twos[0] < ones[0]:
        raise DataError(f"history {label!r}: resight precedes first capture")


def merge_histories(rows, counts):
    """Merge identical rows, summing multiplicities; first-appearance order."""
    index, merged, mult = {}, [], []
    for row, n in zip(rows, counts):
        key = row.tobytes()
        if key in index:
            mult[index[key]] += int(n)
        else:
            index[key] = len(merged)
            merged.append(row)
            mult.append(int(n))
    T = rows[0].shape[0] if len(rows) else 0
    hist = np.array(merged, dtype=np.int8).reshape(len(merged), T)
    return hist, np.array(mult, dtype=np.int64)


def history_bounds(data):
    """First-capture and last-detection days (1-based) of every history."""
    X = data.histories
    detected = X > 0
    first = np.argmax(X == 1, axis=1) + 1
    last = X.shape[1] - np.argmax(detected[:, ::-1], axis=1)
    return HistoryBounds(first.astype(np.int64), last.astype(np.int64))


def _read_rows(path, header):
    try:
        with open(path, newline="") as fh:
            text = fh.read()
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        head = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    if [h.strip() for h in head] != header:
        raise DataError(f"{path}: expected header {','.join(header)}, got {','.join(head)}")
    rows = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields")
        rows.append([c.strip() for c in row])
    return rows


def _parse_int(text, what):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"cannot parse {what} {text!r}") from None


def load_design(path):
    rows = _read_rows(path, ["day", "type", "effort", "location"])
    by_day = {}
    for day_s, kind, eff_s, loc_s in rows:
        day = _parse_int(day_s, "day")
        if day in by_day:
            raise DataError(f"{path}: duplicate day {day}")
        if kind not in (CAPTURE, RESIGHT, NULL):
            raise DataError(f"{path}: day {day}: unknown type {kind!r}")
        if kind != CAPTURE and (eff_s or loc_s):
            raise DataError(f"{path}: day {day}: effort/location given on a non-capture day")
        if kind == CAPTURE:
            if not eff_s or not loc_s:
                raise DataError(f"{path}: day {day}: capture day needs effort and location")
            try:
                eff = float(eff_s)
            except ValueError:
                raise DataError(f"{path}: day {day}: cannot parse effort {eff_s!r}") from None
            loc = _parse_int(loc_s, "location")
        else:
            eff, loc = np.nan, 0
        by_day[day] = (kind, eff, loc)
    T = len(by_day)
    if sorted(by_day) != list(range(1, T + 1)):
        raise DataError(f"{path}: days must be exactly 1..{T}")
    kinds = tuple(by_day[d][0] for d in range(1, T + 1))
    eff = np.array([by_day[d][1] for d in range(1, T + 1)], dtype=float)
    loc = np.array([by_day[d][2] for d in range(1, T + 1)], dtype=np.int64)
    return StudyDesign(kinds, eff, loc)


def load_histories(path, design):
    rows = _read_rows(path, ["history", "count"])
    hist, mult = [], []
    for text, n_s in rows:
        row = history_from_string(text)
        validate_history(row, design)
        n = _parse_int(n_s, "count")
        if n < 1:
            raise DataError(f"{path}: history {text!r}: count must be positive")
        hist.append(row)
        mult.append(n)
    if not hist:
        raise DataError(f"{path}: no histories")
    return merge_histories(hist, mult)


def load_counts(path, design):
    rows = _read_rows(path, ["day", "count"])
    counts = {}
    for day_s, y_s in rows:
        day = _parse_int(day_s, "day")
        if day in counts:
            raise DataError(f"{path}: duplicate day {day}")
        if not 1 <= day <= design.T:
            raise DataError(f"{path}: day {day} outside 1..{design.T}")
        is_res = design.occasion_type[day - 1] == RESIGHT
        if y_s == "":
            if is_res:
                raise DataError(f"{path}: day {day}: resight day needs a count")
            counts[day] = MISSING
            continue
        if not is_res:
            raise DataError(f"{path}: day {day}: count present on a non-resight day")
        y = _parse_int(y_s, "count")
        if y < 0:
            raise DataError(f"{path}: day {day}: negative count")
        counts[day] = y
    if sorted(counts) != list(range(1, design.T + 1)):
        raise DataError(f"{path}: days must be exactly 1..{design.T}")
    return np.array([counts[d] for d in range(1, design.T + 1)], dtype=np.int64)


def load_observations(design, hist_path, counts_path=None):
    """Load histories (and optionally counts) validated against ``design``."""
    hist, mult = load_histories(hist_path, design)
    counts = load_counts(counts_path, design) if counts_path is not None else None
    return ObservedData(hist, mult, counts)


def load_closed_data(hist_path):
    """Closed-population capture histories over {0, 1}; design is all-capture."""
    rows = _read_rows(hist_path, ["history", "count"])
    if not rows:
        raise DataError(f"{hist_path}: no histories")
    T = len(rows[0][0])
    design = make_design([CAPTURE] * T)
    for text, _ in rows:
        if set(text) - {"0", "1"}:
            raise DataError(f"{hist_path}: history {text!r}: closed histories use only 0/1")
    hist, mult = load_histories(hist_path, design)
    return design, ObservedData(hist, mult, None)


def _fmt_float(x):
    return repr(float(x))


def design_to_csv(design):
    buf = io.StringIO()
    buf.write("day,type,effort,location\n")
    for t, kind in enumerate(design.occasion_type):
        if kind == CAPTURE:
            buf.write(f"{t + 1},{kind},{_fmt_float(design.effort[t])},{int(design.location[t])}\n")
        else:
            buf.write(f"{t + 1},{kind},,\n")
    return buf.getvalue()


def histories_to_csv(data):
    buf = io.StringIO()
    buf.write("history,count\n")
    for row, n in zip(data.histories, data.multiplicities):
        buf.write(f"{history_to_string(row)},{int(n)}\n")
    return buf.getvalue()


def counts_to_csv(data):
    buf = io.StringIO()
    buf.write("day,count\n")
    for t, y in enumerate(data.counts):
        buf.write(f"{t + 1},{'' if y == MISSING else int(y)}\n")
    return buf.getvalue()


def write_text(path, text, header=None):
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        fh.write(text)


def write_design(path, design, header=None):
    write_text(path, design_to_csv(design), header)


def write_observations(hist_path, data, counts_path=None, header=None):
    write_text(hist_path, histories_to_csv(data), header)
    if counts_path is not None and data.counts is not None:
        write_text(counts_path, counts_to_csv(data), header)
