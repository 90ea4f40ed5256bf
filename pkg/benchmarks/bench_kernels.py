"""Compare the compiled and pure-Python likelihood kernels.

Times each kernel call directly and then a short open-model chain run in a
subprocess per backend, so the import-time backend selection is exercised.

    python benchmarks/bench_kernels.py [--repeat 200] [--iterations 300]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from rjstopover import kernels
from rjstopover.data import synthetic_design
from rjstopover.open_model import (
    ArrivalMixture, BehaviourModel, DetectionModel, OpenParamState, detection_vectors, entry_probabilities,
)

CHAIN_SCRIPT = """
import time, numpy as np
from rjstopover import kernels
from rjstopover.data import synthetic_design
from rjstopover.open_model import ArrivalMixture, BehaviourModel, DetectionModel, OpenParamState
from rjstopover.ppc import simulate_dataset
from rjstopover.priors import open_priors
from rjstopover.sampler import SamplerConfig, run_chain
design = synthetic_design(38, 9, 0)
state = OpenParamState(2000, ArrivalMixture([0.3, 0.5, 0.2], [8.0, 18.0, 28.0], [3.0, 2.5, 4.0]),
                       BehaviourModel([0.8, 0.2], [-2.0, 3.0], 0.01, -0.05),
                       DetectionModel(-2.0, 0.8, 0.3, -0.3, 0.3))
data = simulate_dataset(state, design, np.random.default_rng(1)).data
cfg = SamplerConfig(iterations={iterations}, burn_in=1, seed=1)
start = time.perf_counter()
run_chain("open", data, design, open_priors(N_mean=3000, N_sd=3000), cfg)
print(kernels.BACKEND, time.perf_counter() - start)
"""


def open_args(T, G):
    design = synthetic_design(T, max(1, T // 4), 0)
    rng = np.random.default_rng(0)
    state = OpenParamState(
        1000,
        ArrivalMixture(np.full(3, 1 / 3), [T / 4, T / 2, 3 * T / 4], [3.0, 2.0, 4.0]),
        BehaviourModel(rng.dirichlet(np.ones(G)), rng.normal(0, 2, G), 0.01, -0.05),
        DetectionModel(-2.0, 0.8, 0.3, -0.3, 0.3),
    )
    dv = detection_vectors(state.detection, design)
    beh = state.behaviour
    return (entry_probabilities(state.arrival, T), beh.pi, beh.phi0, beh.gamma_t, beh.gamma_a,
            dv.capfail, dv.nodet, design.resight.astype(np.uint8), state.detection.s)


def closed_args(T, G):
    rng = np.random.default_rng(0)
    return rng.dirichlet(np.ones(G)), rng.uniform(0.05, 0.5, G), np.arange(T + 1, dtype=np.int64), T


def time_call(fn, args, repeat):
    fn(*args)
    return min(timeit.repeat(lambda: fn(*args), number=repeat, repeat=3)) / repeat


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=200, help="kernel calls per timing")
    parser.add_argument("--iterations", type=int, default=300, help="chain iterations per backend")
    args = parser.parse_args(argv)

    backends = kernels.available()
    print(f"available backends: {', '.join(backends)} (selected at import: {kernels.BACKEND})")
    cases = [("open_core", T, G, open_args(T, G)) for T, G in ((20, 2), (38, 2), (38, 6), (80, 3))]
    cases += [("closed_core", T, G, closed_args(T, G)) for T, G in ((18, 2), (18, 8))]
    print(f"{'kernel':<12}{'T':>4}{'G':>4}" + "".join(f"{b + ' (us)':>16}" for b in backends) + f"{'speedup':>10}")
    for name, T, G, call_args in cases:
        times = {b: time_call(getattr(kernels.load(b), name), call_args, args.repeat) for b in backends}
        row = f"{name:<12}{T:>4}{G:>4}" + "".join(f"{times[b] * 1e6:>16.1f}" for b in backends)
        if len(times) == 2:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)

    print(f"\nopen-model chain, {args.iterations} iterations:")
    script = CHAIN_SCRIPT.format(iterations=args.iterations)
    for backend in backends:
        env = dict(os.environ, RJSTOPOVER_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", script], env=env, capture_output=True, text=True, check=True)
        chosen, seconds = out.stdout.split()
        print(f"  {chosen:<8}{float(seconds):8.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
