import os
import subprocess
import sys

import numpy as np
import pytest

from rjstopover import kernels
from rjstopover.open_model import detection_vectors, entry_probabilities

from conftest import random_design, random_open_state

needs_ext = pytest.mark.skipif("cython" not in kernels.available(), reason="compiled kernels not built")


def open_args(rng, T, extreme=False):
    design = random_design(rng, T)
    state = random_open_state(rng, T)
    if extreme:
        state.behaviour.gamma_t = rng.choice([-1.0, 1.0]) * 20.0
        state.behaviour.phi0 *= 200
    dv = detection_vectors(state.detection, design)
    beh = state.behaviour
    return (
        entry_probabilities(state.arrival, T), beh.pi, beh.phi0, float(beh.gamma_t), float(beh.gamma_a),
        dv.capfail, dv.nodet, design.resight.astype(np.uint8), float(state.detection.s),
    )


@needs_ext
@pytest.mark.parametrize("extreme", [False, True])
def test_open_backends_agree(rng, extreme):
    fast, slow = kernels.load("cython"), kernels.load("python")
    for _ in range(100):
        args = open_args(rng, int(rng.integers(1, 40)), extreme)
        mix_c, p0_c, zeta_c = fast.open_core(*args)
        mix_p, p0_p, zeta_p = slow.open_core(*args)
        assert np.allclose(mix_c, mix_p, rtol=1e-12, atol=1e-300)
        assert p0_c == pytest.approx(p0_p, rel=1e-12, abs=1e-300)
        assert np.allclose(zeta_c, zeta_p, rtol=1e-12, atol=1e-300)


@needs_ext
def test_closed_backends_agree(rng):
    fast, slow = kernels.load("cython"), kernels.load("python")
    for _ in range(100):
        G = int(rng.integers(1, 8))
        pi = rng.dirichlet(np.ones(G))
        if G > 1 and rng.random() < 0.3:
            pi[0] = 0.0  # empty groups contribute -inf logs
            pi /= pi.sum()
        p = rng.uniform(1e-6, 1 - 1e-6, G)
        T = int(rng.integers(1, 30))
        ks = np.unique(np.concatenate([[0], rng.integers(0, T + 1, 5)])).astype(np.int64)
        assert np.allclose(fast.closed_core(pi, p, ks, T), slow.closed_core(pi, p, ks, T), rtol=1e-12, atol=0)


def test_forced_fallback_is_selected():
    env = dict(os.environ, RJSTOPOVER_BACKEND="python")
    out = subprocess.run(
        [sys.executable, "-c", "from rjstopover import BACKEND; print(BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
    assert kernels.BACKEND in kernels.available()
