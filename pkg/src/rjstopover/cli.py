"""Command-line front end.

Subcommands: fit, simulate, gof, diagnose, oracle.  A run is described by a
single JSON config; ``--set key=value`` overrides dotted keys and values
are parsed as JSON when possible.  Every output carries the config hash and
seed, either as a ``#`` header line (CSV) or in a ``_meta`` block (JSON).

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric or
internal failure.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import __version__, diagnostics, kernels, oracle, ppc
from .closed_model import ClosedParamState
from .data import (
    DataError, load_closed_data, load_design, load_observations, make_design,
    synthetic_design, write_design, write_observations,
)
from .open_model import ArrivalMixture, BehaviourModel, DetectionModel, OpenParamState
from .priors import PriorConfig, closed_priors, open_priors
from .sampler import NumericError, SamplerConfig, run_chain
from .trace import ChainTrace, header_line

log = logging.getLogger("rjstopover")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
TOP_KEYS = {"model", "data", "priors", "sampler", "seed", "out", "truth", "simulate", "gof", "diagnose", "oracle"}
DECISIONS = {
    "label_sorting": "arrival components by mu, behaviour groups by phi0, capture groups by p",
    "model_averaging": "pooled over all retained states (M and G)",
    "geweke_variance": "non-overlapping batch means, floor(sqrt(n)) batches",
    "observed_duration": "animals captured at least once",
    "move_schedule": "within-model sweep, then M and G moves each attempted with move_mix probability",
}


class ConfigError(ValueError):
    """Invalid or incomplete run configuration."""


# -- configuration -----------------------------------------------------------------

def parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(config, assignment):
    if "=" not in assignment:
        raise ConfigError(f"--set expects KEY=VALUE, got {assignment!r}")
    key, text = assignment.split("=", 1)
    parts = key.split(".")
    node = config
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {key}: {part} is not a section")
    node[parts[-1]] = parse_value(text)


def load_config(path, overrides=(), seed=None, out=None):
    config = {}
    base = os.getcwd()
    if path is not None:
        try:
            with open(path) as fh:
                config = json.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file {path} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path}: {exc}") from None
        if not isinstance(config, dict):
            raise ConfigError("config must be a JSON object")
        base = os.path.dirname(os.path.abspath(path))
    for assignment in overrides:
        apply_override(config, assignment)
    if seed is not None:
        config["seed"] = seed
    if out is not None:
        config["out"] = out
    unknown = set(config) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    # data paths are relative to the config file
    for key, value in dict(config.get("data", {})).items():
        if isinstance(value, str) and not os.path.isabs(value):
            config["data"][key] = os.path.normpath(os.path.join(base, value))
    if isinstance(config.get("truth"), str) and not os.path.isabs(config["truth"]):
        config["truth"] = os.path.normpath(os.path.join(base, config["truth"]))
    return config


def config_hash(config):
    """sha256 of the canonical JSON config, output location excluded."""
    body = {k: v for k, v in config.items() if k != "out"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def require_seed(config):
    seed = config.get("seed")
    if seed is None:
        raise ConfigError("seed is required (config 'seed' or --seed)")
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    return seed


def require_model(config):
    model = config.get("model")
    if model not in ("open", "closed"):
        raise ConfigError("model must be 'open' or 'closed'")
    return model


def _checked_fields(cls, section, values):
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise ConfigError(f"unknown {section} keys: {', '.join(sorted(unknown))}")
    return values


def build_priors(config):
    model = require_model(config)
    values = _checked_fields(PriorConfig, "priors", dict(config.get("priors", {})))
    values.pop("family", None)
    try:
        return open_priors(**values) if model == "open" else closed_priors(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"priors: {exc}") from None


def build_sampler(config, seed):
    values = _checked_fields(SamplerConfig, "sampler", dict(config.get("sampler", {})))
    values["seed"] = seed
    try:
        return SamplerConfig(**values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sampler: {exc}") from None


def _need_path(config, key):
    path = config.get("data", {}).get(key)
    if path is None:
        raise ConfigError(f"data.{key} is required for the {config.get('model')} model")
    if not os.path.exists(path):
        raise ConfigError(f"data.{key}: file {path} does not exist")
    return path


def load_data(config):
    """(design, data) for the configured model."""
    model = require_model(config)
    if model == "closed":
        return load_closed_data(_need_path(config, "histories"))
    design = load_design(_need_path(config, "design"))
    hist = _need_path(config, "histories")
    counts = _need_path(config, "counts")
    return design, load_observations(design, hist, counts)


# -- truth parameters -----------------------------------------------------------------

def state_from_truth(model, truth):
    try:
        N = truth["N"]
        if not isinstance(N, int) or N < 1:
            raise ConfigError("truth.N must be a positive integer")
        if model == "closed":
            state = ClosedParamState(truth["pi"], truth["p"], N)
            props, probs = [state.pi], [state.p]
        else:
            a, b, d = truth["arrival"], truth["behaviour"], truth["detection"]
            state = OpenParamState(
                N,
                ArrivalMixture(a["w"], a["mu"], a["sigma"]),
                BehaviourModel(b["pi"], b["phi0"], b.get("gamma_t", 0.0), b.get("gamma_a", 0.0)),
                DetectionModel(
                    d.get("cap0", 0.0), d.get("cap_e", 0.0), d.get("cap_loc2", 0.0),
                    d.get("cap_loc3", 0.0), d["s"],
                ),
            )
            props, probs = [state.arrival.w, state.behaviour.pi], [np.array([state.detection.s])]
            if state.arrival.mu.shape != state.arrival.w.shape or state.arrival.sigma.shape != state.arrival.w.shape:
                raise ConfigError("truth.arrival blocks must have equal length")
            if np.any(state.arrival.sigma <= 0):
                raise ConfigError("truth.arrival.sigma must be positive")
            if state.behaviour.phi0.shape != state.behaviour.pi.shape:
                raise ConfigError("truth.behaviour blocks must have equal length")
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"truth: missing or malformed entry {exc}") from None
    for v in props:
        if v.size == 0 or np.any(v < 0) or abs(v.sum() - 1.0) > 1e-9:
            raise ConfigError("truth proportions must be non-negative and sum to 1")
    for v in probs:
        if np.any(v < 0) or np.any(v > 1):
            raise ConfigError("truth probabilities must lie in [0, 1]")
    return state


def truth_scalars(model, truth):
    if model == "closed":
        return {"N": truth["N"]}
    out = {"N": truth["N"]}
    b, d = truth["behaviour"], truth["detection"]
    out["gamma_t"] = b.get("gamma_t", 0.0)
    out["gamma_a"] = b.get("gamma_a", 0.0)
    for key in ("cap0", "cap_e", "cap_loc2", "cap_loc3"):
        out[key] = d.get(key, 0.0)
    out["s"] = d["s"]
    return out


def _read_truth(config):
    truth = config.get("truth")
    if isinstance(truth, str):
        try:
            with open(truth) as fh:
                return json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"truth: {exc}") from None
    return truth


# -- output helpers ----------------------------------------------------------------------

class Outputs:
    def __init__(self, out_dir, chash, seed):
        self.dir = out_dir
        self.hash = chash
        self.seed = seed
        self.header = header_line(chash, seed)
        os.makedirs(out_dir, exist_ok=True)

    def path(self, name):
        return os.path.join(self.dir, name)

    def text(self, name, body):
        with open(self.path(name), "w", newline="") as fh:
            fh.write(self.header)
            fh.write(body)

    def json(self, name, payload):
        body = {"_meta": {"config_hash": self.hash, "seed": self.seed}}
        body.update(payload)
        with open(self.path(name), "w") as fh:
            json.dump(body, fh, indent=2, sort_keys=True, default=_json_default)
            fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not serializable: {type(obj).__name__}")


def _out_dir(config):
    out = config.get("out")
    if not out:
        raise ConfigError("output directory required (config 'out' or --out)")
    return out


# -- fit -----------------------------------------------------------------------------------

def _chain_job(args):
    model, design, data, priors, sampler = args
    return run_chain(model, data, design, priors, sampler)


def chain_seeds(seed, chains):
    if chains == 1:
        return [seed]
    children = np.random.SeedSequence(seed).spawn(chains)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def write_fit_outputs(outputs, trace, model, design, config, priors, sampler, truth=None):
    trace.meta["config_hash"] = outputs.hash
    trace.meta["seed"] = outputs.seed
    trace.write(outputs.path("trace.csv"))
    outputs.json("acceptance.json", {"acceptance": trace.meta.get("acceptance", {})})
    probs = diagnostics.model_probabilities(trace)
    outputs.text("model_probs.csv", diagnostics.model_probs_csv(probs))
    averaged = diagnostics.conditional_summary(trace)
    outputs.text("summary_averaged.csv", diagnostics.summaries_csv(averaged))
    parts = []
    for G in sorted(set(trace.G.tolist())):
        summ = diagnostics.conditional_summary(trace, G=G)
        body = diagnostics.summaries_csv(summ, extra={"G": G})
        parts.append(body if not parts else body.split("\n", 1)[1])
    outputs.text("summary_by_G.csv", "".join(parts))
    if model == "open":
        parts = []
        for (M, G) in probs:
            summ = diagnostics.conditional_summary(trace, M=M, G=G, quantities=["N"])
            body = diagnostics.summaries_csv(summ, extra={"M": M, "G": G})
            parts.append(body if not parts else body.split("\n", 1)[1])
        outputs.text("summary_by_MG.csv", "".join(parts))
        entry, _ = diagnostics.model_averaged_entry(trace, design.T)
        rows = [
            {"day": t + 1, "mean": s.mean, "sd": s.sd, "lower": s.lower, "upper": s.upper}
            for t, s in enumerate(entry)
        ]
        body = "day,mean,sd,lower,upper\n" + "".join(
            f"{r['day']},{r['mean']!r},{r['sd']!r},{r['lower']!r},{r['upper']!r}\n" for r in rows
        )
        outputs.text("entry_averaged.csv", body)
    meta = {
        "version": __version__,
        "backend": kernels.BACKEND,
        "model": model,
        "config": {k: v for k, v in config.items() if k != "out"},
        "priors": priors.to_dict(),
        "sampler": sampler.for_model(model).to_dict(),
        "final_step_sizes": trace.meta.get("final_steps", {}),
        "retained": len(trace),
        "decisions": DECISIONS,
        "averaging_conditioning": "summary_averaged.csv pools every retained state",
    }
    if truth is not None:
        meta["truth"] = truth
    outputs.json("metadata.json", meta)


def cmd_fit(config, chains=1):
    """Run ``chains`` seeded chains; returns their traces."""
    model = require_model(config)
    seed = require_seed(config)
    out = _out_dir(config)
    if chains < 1:
        raise ConfigError("--chains must be >= 1")
    priors = build_priors(config)
    build_sampler(config, seed)  # validate before touching data
    design, data = load_data(config)
    truth = _read_truth(config)
    chash = config_hash(config)
    priors_resolved = priors.resolve(design.T, data.D)
    seeds = chain_seeds(seed, chains)
    jobs = [(model, design, data, priors, build_sampler(config, s)) for s in seeds]
    if chains == 1:
        traces = [_chain_job(jobs[0])]
    else:
        with ProcessPoolExecutor(max_workers=min(chains, os.cpu_count() or 1)) as pool:
            traces = list(pool.map(_chain_job, jobs))
    for k, (trace, s) in enumerate(zip(traces, seeds)):
        target = out if chains == 1 else os.path.join(out, f"chain_{k + 1}")
        outputs = Outputs(target, chash, s)
        write_fit_outputs(outputs, trace, model, design, config, priors_resolved, jobs[k][4], truth)
    return traces


# -- simulate -----------------------------------------------------------------------------

def cmd_simulate(config):
    model = require_model(config)
    seed = require_seed(config)
    out = _out_dir(config)
    truth = _read_truth(config)
    if truth is None:
        raise ConfigError("simulate needs truth parameters (config 'truth' or --truth)")
    state = state_from_truth(model, truth)
    spec = config.get("simulate", {})
    rng = np.random.default_rng(seed)
    outputs = Outputs(out, config_hash(config), seed)
    if model == "closed":
        T = int(spec.get("T", 6))
        data = ppc.simulate_closed_dataset(state, T, rng)
        write_observations(outputs.path("histories.csv"), data, header=outputs.header)
        data_cfg = {"histories": "histories.csv"}
    else:
        if "design" in config.get("data", {}):
            design = load_design(_need_path(config, "design"))
        elif "types" in spec:
            design = make_design(spec["types"], spec.get("effort"), spec.get("location"))
        else:
            design = synthetic_design(
                int(spec.get("T", 38)), int(spec.get("n_null", 9)), int(spec.get("design_seed", 0))
            )
        data = ppc.simulate_dataset(state, design, rng).data
        write_design(outputs.path("design.csv"), design, header=outputs.header)
        write_observations(
            outputs.path("histories.csv"), data, outputs.path("counts.csv"), header=outputs.header
        )
        data_cfg = {"design": "design.csv", "histories": "histories.csv", "counts": "counts.csv"}
    with open(outputs.path("truth.json"), "w") as fh:
        json.dump(truth, fh, indent=2, sort_keys=True)
        fh.write("\n")
    fit_cfg = {"model": model, "data": data_cfg, "truth": "truth.json", "seed": seed}
    for key in ("priors", "sampler"):
        if key in config:
            fit_cfg[key] = config[key]
    with open(outputs.path("fit_config.json"), "w") as fh:
        json.dump(fit_cfg, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return data


# -- gof / diagnose / oracle ------------------------------------------------------------------

def _load_trace(path):
    if path is None:
        raise ConfigError("--trace is required")
    try:
        return ChainTrace.read(path)
    except FileNotFoundError:
        raise ConfigError(f"trace file {path} not found") from None
    except (ValueError, KeyError) as exc:
        raise DataError(f"trace file {path}: {exc}") from None


def cmd_gof(config, trace_path, draws=None):
    model = require_model(config)
    if model != "open":
        raise ConfigError("gof checks are defined for the open model")
    seed = require_seed(config)
    out = _out_dir(config)
    draws = int(draws if draws is not None else config.get("gof", {}).get("draws", 100))
    design, data = load_data(config)
    trace = _load_trace(trace_path)
    if trace.model != "open":
        raise DataError("trace does not come from the open model")
    outputs = Outputs(out, config_hash(config), seed)
    rng = np.random.default_rng(seed)
    check = ppc.gof_loglik_density(trace, data, design, draws, rng)
    outputs.text("gof_loglik.csv", ppc.loglik_csv(check))
    stats = ppc.gof_occasion_stats(trace, data, design, draws, rng)
    outputs.text("gof_first_caught.csv", ppc.first_caught_csv(stats))
    outputs.text("gof_unmarked.csv", ppc.unmarked_csv(stats))
    G = config.get("gof", {}).get("duration_G")
    rows = ppc.observed_stopover_durations(trace, design, draws, rng, G)
    outputs.text("durations.csv", ppc.durations_csv(rows))
    outputs.json("gof_summary.json", {
        "draws": draws,
        "mode_gap_pooled_sd": check.mode_gap(),
        "occasion_coverage": stats.coverage(),
        "duration_condition_G": G,
        "observed_duration": DECISIONS["observed_duration"],
    })
    return check, stats


def cmd_diagnose(config, trace_path):
    trace = _load_trace(trace_path)
    chash = trace.meta.get("config_hash") or config_hash(config)
    seed = config.get("seed", trace.meta.get("seed", ""))
    out = _out_dir(config)
    opts = config.get("diagnose", {})
    first, last = opts.get("first_frac", 0.1), opts.get("last_frac", 0.5)
    outputs = Outputs(out, chash, seed)
    rows = ["quantity,z,degenerate\n"]
    results = {}
    for name in trace.scalar_names + ["loglik"]:
        series = trace.scalar(name)
        if series.size < 100:
            raise DataError("trace too short for the Geweke diagnostic (need 100 states)")
        res = diagnostics.geweke_z(series, first, last)
        results[name] = res
        rows.append(f"{name},{'' if res.degenerate else repr(res.z)},{int(res.degenerate)}\n")
    outputs.text("geweke.csv", "".join(rows))
    probs = diagnostics.model_probabilities(trace)
    outputs.text("model_probs.csv", diagnostics.model_probs_csv(probs))
    return results


def cmd_oracle(config):
    model = require_model(config)
    seed = require_seed(config)
    out = _out_dir(config)
    opts = config.get("oracle", {})
    design, data = load_data(config)
    priors = build_priors(config)
    if model != "closed" or design.T > oracle.DEFAULT_BUDGET.max_T:
        raise oracle.BudgetError(
            f"oracle budget: closed model with T <= {oracle.DEFAULT_BUDGET.max_T} only "
            f"(got {model} model, T={design.T})"
        )
    rng = np.random.default_rng(seed)
    res = oracle.rejection_posterior(
        model, data, design, priors, int(opts.get("max_draws", 1_000_000)), rng,
        target_accepted=opts.get("target_accepted"),
    )
    outputs = Outputs(out, config_hash(config), seed)
    res.trace.meta.update(config_hash=outputs.hash, seed=seed)
    res.trace.write(outputs.path("trace.csv"))
    outputs.text("model_probs.csv", diagnostics.model_probs_csv(diagnostics.model_probabilities(res.trace)))
    outputs.json("oracle.json", {"draws": res.draws, "accepted": res.accepted, "log_bound": res.log_bound})
    return res


# -- entry point -------------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="rjstopover", description=__doc__.split("\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--seed", type=int, help="64-bit seed (overrides config)")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a dotted config key; repeatable")
        return p

    fit = common(sub.add_parser("fit", help="run the RJMCMC sampler"))
    fit.add_argument("--chains", type=int, default=1, help="independent chains")
    sim = common(sub.add_parser("simulate", help="simulate a dataset from truth parameters"))
    sim.add_argument("--truth", help="truth JSON (overrides config)")
    gof = common(sub.add_parser("gof", help="posterior-predictive checks"))
    gof.add_argument("--trace", help="trace CSV from fit")
    gof.add_argument("--draws", type=int, help="posterior draws (default 100)")
    diag = common(sub.add_parser("diagnose", help="Geweke diagnostics and model probabilities"))
    diag.add_argument("--trace", help="trace CSV from fit")
    common(sub.add_parser("oracle", help="rejection-sampling reference posterior"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        config = load_config(args.config, args.set, args.seed, args.out)
        if args.command == "fit":
            cmd_fit(config, args.chains)
        elif args.command == "simulate":
            if args.truth:
                config["truth"] = os.path.abspath(args.truth)
            cmd_simulate(config)
        elif args.command == "gof":
            cmd_gof(config, args.trace, args.draws)
        elif args.command == "diagnose":
            cmd_diagnose(config, args.trace)
        else:
            cmd_oracle(config)
    except (ConfigError, oracle.BudgetError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (FloatingPointError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
