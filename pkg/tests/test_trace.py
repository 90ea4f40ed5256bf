import numpy as np
import pytest

from rjstopover.closed_model import ClosedParamState
from rjstopover.trace import ChainTrace, header_line, parse_header

from conftest import random_open_state


def test_open_round_trip(rng):
    trace = ChainTrace("open", meta={"config_hash": "abc", "seed": 4})
    for i in range(30):
        trace.append(2 * i + 1, random_open_state(rng, 10, N=50 + i), rng.normal(), rng.normal())
    text = trace.to_csv()
    again = ChainTrace.from_csv(text)
    assert again.to_csv() == text
    assert again.meta == {"config_hash": "abc", "seed": "4"}
    assert np.array_equal(again.scalar("cap_e"), trace.scalar("cap_e"))
    assert again.M.tolist() == trace.M.tolist()


def test_closed_round_trip(tmp_path):
    trace = ChainTrace("closed")
    trace.append(1, ClosedParamState([0.25, 0.75], [0.1, 0.3333333333333333], 9), -1.5, 0.1)
    path = tmp_path / "t.csv"
    trace.write(path)
    again = ChainTrace.read(path)
    assert again.to_csv() == trace.to_csv()
    assert again.states[0].p[1] == 0.3333333333333333
    assert again.M.tolist() == [-1]


def test_iterations_strictly_increase():
    trace = ChainTrace("closed")
    trace.append(3, ClosedParamState([1.0], [0.5], 2), 0.0, 0.0)
    with pytest.raises(ValueError):
        trace.append(3, ClosedParamState([1.0], [0.5], 2), 0.0, 0.0)


def test_header_helpers():
    assert parse_header(header_line("f00", 12)) == {"config_hash": "f00", "seed": "12"}
    with pytest.raises(ValueError):
        ChainTrace.from_csv("a,b\n1,2\n")
