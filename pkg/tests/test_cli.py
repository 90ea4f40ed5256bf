import json
import os

import pytest

from rjstopover import cli
from rjstopover.sampler import NumericError
from rjstopover.trace import ChainTrace, parse_header

TRUTH = {
    "N": 300,
    "arrival": {"w": [0.6, 0.4], "mu": [3.0, 6.0], "sigma": [1.5, 1.5]},
    "behaviour": {"pi": [1.0], "phi0": [1.0], "gamma_t": 0.0, "gamma_a": 0.0},
    "detection": {"cap0": -0.5, "cap_e": 0.2, "cap_loc2": 0.0, "cap_loc3": 0.0, "s": 0.4},
}
SAMPLER = {"iterations": 400, "burn_in": 100, "check_every": 100}


def write_json(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


@pytest.fixture
def simulated(tmp_path):
    cfg = write_json(tmp_path / "sim.json", {
        "model": "open", "truth": TRUTH, "simulate": {"types": "CRCRNCRCR"},
        "priors": {"N_mean": 300, "N_sd": 200}, "sampler": SAMPLER,
    })
    out = tmp_path / "data"
    assert cli.main(["simulate", "--config", cfg, "--seed", "5", "--out", str(out)]) == 0
    return out


def fit(config_path, out, seed=3, *extra):
    return cli.main(["fit", "--config", str(config_path), "--seed", str(seed), "--out", str(out), *extra])


def test_simulate_then_fit_is_byte_identical(simulated, tmp_path):
    for name in ("design.csv", "histories.csv", "counts.csv", "truth.json", "fit_config.json"):
        assert (simulated / name).exists()
    cfg = simulated / "fit_config.json"
    assert fit(cfg, tmp_path / "a") == 0 and fit(cfg, tmp_path / "b") == 0
    names = sorted(os.listdir(tmp_path / "a"))
    assert names == sorted(os.listdir(tmp_path / "b"))
    assert {"trace.csv", "acceptance.json", "model_probs.csv", "metadata.json", "entry_averaged.csv"} <= set(names)
    for name in names:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    meta = json.loads((tmp_path / "a" / "metadata.json").read_text())
    assert meta["truth"] == TRUTH
    assert meta["priors"]["mu_mean"] == 4.5 and "label_sorting" in meta["decisions"]
    # every file of the run shares one config hash and seed
    hashes = set()
    for name in names:
        text = (tmp_path / "a" / name).read_text()
        if name.endswith(".csv"):
            hashes.add(tuple(sorted(parse_header(text.splitlines()[0]).items())))
        else:
            m = json.loads(text)["_meta"]
            hashes.add(tuple(sorted({k: str(v) for k, v in m.items()}.items())))
    assert len(hashes) == 1


def test_different_seed_changes_trace(simulated, tmp_path):
    cfg = simulated / "fit_config.json"
    fit(cfg, tmp_path / "a", 1)
    fit(cfg, tmp_path / "b", 2)
    assert (tmp_path / "a" / "trace.csv").read_bytes() != (tmp_path / "b" / "trace.csv").read_bytes()


def test_gof_and_diagnose(simulated, tmp_path):
    cfg = simulated / "fit_config.json"
    assert fit(cfg, tmp_path / "fit", 3, "--set", "sampler.iterations=600") == 0
    trace = str(tmp_path / "fit" / "trace.csv")
    assert cli.main(["gof", "--config", str(cfg), "--seed", "3", "--out", str(tmp_path / "gof"),
                     "--trace", trace, "--draws", "100"]) == 0
    for name in ("gof_loglik.csv", "gof_first_caught.csv", "gof_unmarked.csv"):
        lines = (tmp_path / "gof" / name).read_text().splitlines()
        body = [l for l in lines[2:] if not l.startswith("real")]
        assert len(body) == 100, name
    assert cli.main(["diagnose", "--config", str(cfg), "--out", str(tmp_path / "diag"), "--trace", trace]) == 0
    rows = (tmp_path / "diag" / "geweke.csv").read_text().splitlines()
    assert rows[1] == "quantity,z,degenerate"
    assert [r.split(",")[0] for r in rows[2:]] == ChainTrace("open").scalar_names + ["loglik"]


def test_multiple_chains(simulated, tmp_path):
    cfg = simulated / "fit_config.json"
    assert fit(cfg, tmp_path / "multi", 3, "--chains", "2", "--set", "sampler.iterations=200",
               "--set", "sampler.burn_in=50") == 0
    a = (tmp_path / "multi" / "chain_1" / "trace.csv").read_text()
    b = (tmp_path / "multi" / "chain_2" / "trace.csv").read_text()
    assert a != b


def test_missing_counts_names_field(simulated, tmp_path, capsys):
    cfg = json.loads((simulated / "fit_config.json").read_text())
    del cfg["data"]["counts"]
    cfg["data"] = {k: str(simulated / v) for k, v in cfg["data"].items()}
    cfg["truth"] = str(simulated / "truth.json")
    path = write_json(tmp_path / "c.json", cfg)
    assert fit(path, tmp_path / "o") == 2
    assert "data.counts" in capsys.readouterr().err


def test_exit_codes(simulated, tmp_path, monkeypatch, capsys):
    cfg = simulated / "fit_config.json"
    # no seed
    assert cli.main(["fit", "--config", str(cfg), "--out", str(tmp_path / "x"), "--set", "seed=null"]) == 2
    assert cli.main(["fit", "--config", str(tmp_path / "nope.json"), "--seed", "1", "--out", "x"]) == 2
    assert fit(cfg, tmp_path / "x", 1, "--set", "sampler.gamma_prop=2") == 2
    assert fit(cfg, tmp_path / "x", 1, "--set", "bogus=1") == 2

    def boom(*args, **kwargs):
        raise NumericError("cache mismatch")

    monkeypatch.setattr(cli, "run_chain", boom)
    assert fit(cfg, tmp_path / "y") == 4
    # malformed data file
    (simulated / "histories.csv").write_text("history,count\n000000000,1\n")
    assert fit(cfg, tmp_path / "x") == 3
    assert "data error" in capsys.readouterr().err


def test_simulate_rejects_zero_animals(tmp_path):
    bad = dict(TRUTH, N=0)
    cfg = write_json(tmp_path / "s.json", {"model": "open", "truth": bad, "simulate": {"types": "CR"}})
    assert cli.main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 2
    bad = dict(TRUTH, arrival={"w": [0.5, 0.6], "mu": [1.0, 2.0], "sigma": [1.0, 1.0]})
    cfg = write_json(tmp_path / "s.json", {"model": "open", "truth": bad, "simulate": {"types": "CR"}})
    assert cli.main(["simulate", "--config", cfg, "--seed", "1", "--out", str(tmp_path / "o")]) == 2


def test_oracle_budget_and_run(simulated, tmp_path):
    cfg = simulated / "fit_config.json"
    assert cli.main(["oracle", "--config", str(cfg), "--seed", "1", "--out", str(tmp_path / "o")]) == 2
    hist = tmp_path / "h.csv"
    hist.write_text("history,count\n10,1\n")
    closed = write_json(tmp_path / "closed.json", {
        "model": "closed", "data": {"histories": "h.csv"},
        "priors": {"G_max": 3, "N_max": 8}, "oracle": {"max_draws": 200000},
    })
    assert cli.main(["oracle", "--config", closed, "--seed", "1", "--out", str(tmp_path / "or")]) == 0
    summary = json.loads((tmp_path / "or" / "oracle.json").read_text())
    assert summary["draws"] == 200000 and summary["accepted"] > 0
    trace = ChainTrace.read(tmp_path / "or" / "trace.csv")
    assert trace.model == "closed" and len(trace) == summary["accepted"]


def test_closed_fit_end_to_end(tmp_path):
    hist = tmp_path / "h.csv"
    hist.write_text("history,count\n100,2\n011,1\n111,1\n")
    cfg = write_json(tmp_path / "closed.json", {
        "model": "closed", "data": {"histories": "h.csv"}, "sampler": SAMPLER,
    })
    assert fit(cfg, tmp_path / "f") == 0
    probs = (tmp_path / "f" / "model_probs.csv").read_text().splitlines()
    assert probs[1] == "M,G,probability" and probs[2].startswith("-1,")


def test_override_parsing():
    config = {}
    cli.apply_override(config, "sampler.step_sizes.N=3.5")
    cli.apply_override(config, "model=open")
    assert config == {"sampler": {"step_sizes": {"N": 3.5}}, "model": "open"}
    with pytest.raises(cli.ConfigError):
        cli.apply_override(config, "no-equals")
    assert cli.config_hash({"a": 1, "out": "x"}) == cli.config_hash({"a": 1, "out": "y"})
