import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qkoopman import harness
from qkoopman.cli import main
from qkoopman.errors import ConfigError
from qkoopman.harness import ExperimentConfig, ResultRecord, SweepSpec
from qkoopman.quantum_sim import MultichannelSeries

from conftest import block_diag_generator, linear_series

# small enough to simulate in well under a second
FAST = dict(alpha=0.3, n_x=8, n_y=8, t_f=10.0, m=30, r_max=10)


# -- configs --------------------------------------------------------------------

configs = st.builds(
    ExperimentConfig,
    system=st.sampled_from(["qho", "kerr", "cross_kerr", "jaynes_cummings"]),
    name=st.text(max_size=8),
    omega_x=st.floats(0.1, 20), kappa=st.floats(0, 2), chi_x=st.floats(-5, 5),
    chi_xy=st.floats(0, 1), g=st.floats(0, 1), alpha=st.floats(0, 2),
    n_x=st.integers(2, 20), r=st.one_of(st.just("auto"), st.integers(1, 40)),
    tau=st.floats(0.01, 0.99), bath_model=st.sampled_from(["independent", "common"]),
    ordering=st.sampled_from(["as_printed", "normal"]),
)


@given(configs)
@settings(max_examples=60, deadline=None)
def test_config_round_trip(cfg):
    text = cfg.to_json()
    again = ExperimentConfig.from_dict(json.loads(text))
    assert again == cfg
    assert again.to_json() == text


def test_config_file_round_trip(tmp_path):
    cfg = ExperimentConfig(system="modulated", delta=4.0, omega_f=math.pi / math.e)
    cfg.to_json(tmp_path / "c.json")
    assert ExperimentConfig.from_json(tmp_path / "c.json") == cfg


def test_minimal_config_takes_defaults():
    cfg = ExperimentConfig.from_dict({"system": "kerr", "chi_x": 2.0})
    assert cfg.omega_x == 2 * math.pi and cfg.kappa == 0.1 and cfg.r == "auto"


@pytest.mark.parametrize("bad", [
    {"system": "nope"},
    {"system": "modulated", "delta": 4.0},
    {"system": "kerr_closed", "kappa": 0.1},
    {"system": "qho", "bath_model": "shared"},
    {"system": "qho", "ordering": "weyl"},
    {"system": "qho", "r": 0},
    {"system": "qho", "r": "best"},
    {"system": "qho", "tau": 1.0},
    {"system": "qho", "dt": 0.0},
    {"system": "qho", "m": 1},
    {"system": "qho", "baseline_channel": "re_sigma_plus"},
    {"system": "qho", "colour": "red"},
    {"kappa": 0.1},
])
def test_config_errors(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict(bad)


def test_unreadable_config(tmp_path):
    (tmp_path / "c.json").write_text("{not json")
    with pytest.raises(ConfigError):
        ExperimentConfig.from_json(tmp_path / "c.json")


# -- sweeps -----------------------------------------------------------------------

def test_sweep_configs_and_names():
    base = ExperimentConfig(system="kerr", name="grid")
    sweep = SweepSpec(("chi_x", "chi_y"), [(2.0, 3.0), (2.3, 3.2)])
    cfgs = sweep.configs(base)
    assert [(c.chi_x, c.chi_y) for c in cfgs] == [(2.0, 3.0), (2.3, 3.2)]
    assert cfgs[0].name == "grid_chi_x=2_chi_y=3"
    assert SweepSpec.from_dict(json.loads(json.dumps(sweep.to_dict()))).values == sweep.values


def test_sweep_linspace_and_overrides():
    s = SweepSpec.from_dict({"parameter": "kappa", "start": 0.1, "stop": 1.5, "num": 15})
    assert s.values[0] == 0.1 and s.values[-1] == 1.5 and len(s.values) == 15
    o = SweepSpec("kappa", [0.1, 0.2], [{"r": 4}, {}])
    assert [c.r for c in o.configs(ExperimentConfig())] == [4, "auto"]


@pytest.mark.parametrize("bad", [
    {"parameter": "kappa", "values": []},
    {"parameter": "kappa"},
    {"parameter": "kappa", "values": [0.1], "overrides": [{}, {}]},
])
def test_sweep_errors(bad):
    with pytest.raises(ConfigError):
        SweepSpec.from_dict(bad)


def test_sweep_value_shape_mismatch():
    with pytest.raises(ConfigError):
        SweepSpec(("chi_x", "chi_y"), [2.0]).configs(ExperimentConfig())


def test_sweep_records_failures_and_continues(tmp_path):
    base = ExperimentConfig(system="qho", name="s", **FAST)
    # the second point overflows an 8-level truncation at t = 0
    sweep = SweepSpec("alpha", [0.3, 2.0])
    records, rows = harness.run_sweep(base, sweep, tmp_path)
    assert [r.status for r in records] == ["ok", "failed"]
    assert "TruncationError" in records[1].error
    text = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(text) == 3 and text[0].startswith("name,system,status")
    assert "err_omega_x" in text[0] and "err_fft" in text[0] and "err_pencil" in text[0]


# -- runs -------------------------------------------------------------------------

def test_run_experiment_fast_qho(tmp_path):
    cfg = ExperimentConfig(system="qho", name="fast qho", **FAST)
    art = {}
    rec = harness.run_experiment(cfg, tmp_path, artifacts=art)
    assert rec.ok, rec.error
    assert rec.r_opt == rec.r_used and rec.rank_table
    assert set(art) == {"series", "trajectory", "model", "reconstruction", "spectrum"}
    assert rec.percent_errors()["omega_x"] < 0.5
    assert set(rec.reconstruction) == set(cfg.channels)
    out = tmp_path / "fast_qho"
    assert {p.name for p in out.iterdir()} == {"record.json", "timings.json", "series.csv"}
    back = ResultRecord.from_json(out / "record.json")
    assert back.to_dict() == json.loads((out / "record.json").read_text())
    assert set(json.loads((out / "timings.json").read_text())) >= {"simulate", "svd", "fit"}


def test_run_experiment_deterministic(tmp_path):
    cfg = ExperimentConfig(system="qho", **FAST)
    a = harness.run_experiment(cfg, tmp_path / "a")
    b = harness.run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a/qho/record.json").read_bytes() == (tmp_path / "b/qho/record.json").read_bytes()
    assert a.to_json is not None and b.ok


def test_run_experiment_precomputed_series():
    g = block_diag_generator([(0.05, 2 * math.pi), (0.05, math.pi)])
    s = linear_series(g, [1.0, 0.0, 1.0, 0.0])
    s = MultichannelSeries(s.dt, dict(zip(("x", "p_x", "y", "p_y"), s.values())))
    rec = harness.run_experiment(ExperimentConfig(system="qho", r=4, m=50), series=s)
    assert rec.ok and rec.n_forcing == 0
    # the five-point derivative biases frequencies by (w h)^4 / 30
    assert rec.percent_errors()["omega_x"] <= 1.01 * 100 * (2 * math.pi * 0.01) ** 4 / 30
    assert rec.percent_errors()["kappa"] < 1e-3
    assert rec.baselines["pencil"]["percent_error"] < 1e-6


def test_run_experiment_stage_error_in_record():
    flat = MultichannelSeries(0.01, {n: np.ones(500) for n in ("x", "y", "p_x", "p_y")})
    rec = harness.run_experiment(ExperimentConfig(system="qho", m=20), series=flat)
    assert not rec.ok and rec.error.startswith("embed: ClassificationError")
    assert rec.retrieved() == {}


def test_write_csv_format(tmp_path):
    harness.write_csv([{"a": 0.1, "b": None}, {"a": 1, "c": True}], tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text() == "a,b,c\n0.10000000000000001,,\n1,,True\n"


# -- CLI ----------------------------------------------------------------------------

def test_cli_usage_errors(tmp_path, capsys):
    assert main(["bogus"]) == 2
    assert main([]) == 2
    assert main(["reproduce", "fig99", "--out", str(tmp_path)]) == 2
    assert main(["--help"]) == 0
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"system": "modulated", "delta": 4.0}))
    out = tmp_path / "out"
    assert main(["identify", "--config", str(bad), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["sweep", "--config", str(bad), "--out", str(out)]) == 2


def test_cli_simulate_fit_identify(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    ExperimentConfig(system="qho", name="tiny", **FAST).to_json(cfg)
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "sim")]) == 0
    series = tmp_path / "sim" / "series.csv"
    assert series.read_text().startswith("t,x,y,p_x,p_y\n")
    assert main(["fit", str(series), "--m", "30", "--r", "4", "--out", str(tmp_path / "fit")]) == 0
    assert {"model.json", "reconstruction.csv", "modes.csv"} <= {
        p.name for p in (tmp_path / "fit").iterdir()}
    assert main(["fit", str(series), "--m", "30", "--r-max", "8", "--out",
                 str(tmp_path / "auto")]) == 0
    assert (tmp_path / "auto" / "rank_sweep.csv").exists()
    assert main(["identify", "--config", str(cfg), "--out", str(tmp_path / "id")]) == 0
    assert (tmp_path / "id" / "tiny" / "record.json").exists()
    assert main(["fit", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "x")]) == 2


def test_cli_sweep_exit_codes(tmp_path, capsys):
    combined = tmp_path / "s.json"
    base = ExperimentConfig(system="qho", name="s", **FAST).to_dict()
    combined.write_text(json.dumps({"base": base, "sweep": {"parameter": "kappa",
                                                            "values": [0.1, 0.2]}}))
    assert main(["sweep", "--config", str(combined), "--out", str(tmp_path / "ok")]) == 0
    partial = tmp_path / "p.json"
    partial.write_text(json.dumps({"base": base, "sweep": {"parameter": "alpha",
                                                           "values": [0.3, 2.0]}}))
    assert main(["sweep", "--config", str(partial), "--out", str(tmp_path / "bad")]) == 1
    empty = tmp_path / "e.json"
    empty.write_text(json.dumps({"base": base, "sweep": {"parameter": "kappa", "values": []}}))
    assert main(["sweep", "--config", str(empty), "--out", str(tmp_path / "e")]) == 2
