import json

import numpy as np
import pytest

from src.config import config_from_dict, load_settings, parse_config
from src.errors import ConfigError, IntegrationError
from src.interfaces import cli
from src.mcwf.engine import SelectionMode
from src.propagators import exact


def _write(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.fixture
def small_run(tmp_path):
    return _write(
        tmp_path / "run.json",
        {
            "scenario": "lossy_cavity",
            "parameters": {"kappa": 0.1, "n0": 2},
            "n_trajectories": 4,
            "t_final": 1.0,
            "dt": 0.05,
            "truncation": {"n_max": 2},
            "master_seed": 7,
            "workers": 1,
        },
    )


def test_minimal_config_uses_preset_defaults():
    config = config_from_dict({"scenario": "lossy_cavity"})
    spec = config.scenario_spec()
    assert spec.parameters["kappa"] == 0.016
    assert spec.parameters["n0"] == 8
    assert config.n_trajectories == 400
    assert config.propagator == "exact"
    assert config.representation == "fock"
    assert config.dt is None


def test_mctdh_defaults_to_grid():
    config = config_from_dict({"scenario": "rabi", "propagator": "mctdh", "grid": {"n_points": 8, "n_spf": 2}})
    assert config.representation == "grid"
    assert config.scenario_spec().dims == (8, 8)
    assert config.oracle_representation().kind == "fock"


def test_zero_trajectories_rejected():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"scenario": "lossy_cavity", "n_trajectories": 0})
    assert info.value.field == "n_trajectories"


def test_unknown_keys_name_the_field():
    with pytest.raises(ConfigError) as info:
        config_from_dict({"scenario": "rabi", "grid": {"npoints": 4}})
    assert info.value.field == "grid.npoints"
    with pytest.raises(ConfigError) as info:
        config_from_dict({"scenario": "rabi", "parameters": {"delta": 1.0}})
    assert info.value.field == "parameters.delta"
    with pytest.raises(ConfigError) as info:
        config_from_dict({"scenario": "nope"})
    assert info.value.field == "scenario"


def test_syntax_error_reports_line(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n  "scenario": "rabi",\n  "dt": \n}\n', encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        parse_config(path)
    assert info.value.line == 4
    assert "line 4" in str(info.value)


def test_ring_array_coupling_default():
    config = config_from_dict({"scenario": "ring_array", "truncation": {"nu_max": 1, "n_max": 1}})
    assert config.scenario_spec().parameters["lam"] == pytest.approx(0.065)


def test_overrides_rederive_representation():
    config = config_from_dict({"scenario": "rabi"})
    switched = config.with_overrides(propagator="mctdh", master_seed=None)
    assert switched.representation == "grid"
    assert switched.master_seed == config.master_seed
    assert config.with_overrides() is config


def test_sweep_larger_than_ensemble_rejected():
    with pytest.raises(ConfigError):
        config_from_dict({"scenario": "lossy_cavity", "n_trajectories": 10, "sweep": [5, 20]})


def test_parse_sweep():
    assert cli.parse_sweep("n_T=25,50,100") == (25, 50, 100)
    assert cli.parse_sweep("10,20") == (10, 20)
    with pytest.raises(ConfigError):
        cli.parse_sweep("n_T=a,b")


def test_settings_from_environment(monkeypatch):
    monkeypatch.setenv("MCWF_WORKERS", "3")
    monkeypatch.setenv("MCWF_OUTPUT_DIR", "elsewhere")
    settings = load_settings()
    assert settings.workers == 3
    assert settings.output_dir == "elsewhere"
    monkeypatch.setenv("MCWF_WORKERS", "many")
    assert load_settings().workers >= 1


def test_run_writes_artifacts(small_run, tmp_path):
    out = tmp_path / "out"
    status = cli.main(["run", str(small_run), "--out", str(out), "--oracle", "--sweep", "n_T=2,4"])
    assert status == 0
    for name in ("ensemble.csv", "oracle.csv", "mse_sweep.csv", "jumps.json", "manifest.json"):
        assert (out / name).exists()
    header = (out / "ensemble.csv").read_text().splitlines()[0]
    assert header == "time,n_a_mean,n_a_stderr"
    assert (out / "mse_sweep.csv").read_text().splitlines()[0] == "n_T,n_a_mse,n_a_mse_of_mean,n_a_normalized"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["dt_tau"] == pytest.approx(0.05)
    assert len(manifest["seeds"]) == 4
    assert manifest["flags"]["truncation_ok"] is True
    jumps = json.loads((out / "jumps.json").read_text())
    assert [entry["index"] for entry in jumps] == [0, 1, 2, 3]


def test_runs_are_reproducible_across_worker_counts(small_run, tmp_path):
    outputs = []
    for name, workers in (("a", "1"), ("b", "1"), ("c", "2")):
        out = tmp_path / name
        assert cli.main(["run", str(small_run), "--out", str(out), "--workers", workers]) == 0
        outputs.append((out / "ensemble.csv").read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_seed_override_changes_seeds(small_run, tmp_path):
    assert cli.main(["run", str(small_run), "--out", str(tmp_path / "s"), "--seed", "8"]) == 0
    manifest = json.loads((tmp_path / "s" / "manifest.json").read_text())
    assert manifest["config"]["master_seed"] == 8


def test_automatic_time_step(tmp_path):
    path = _write(
        tmp_path / "auto.json",
        {"scenario": "lossy_cavity", "parameters": {"n0": 2}, "n_trajectories": 2, "t_final": 1.0, "truncation": {"n_max": 2}},
    )
    assert cli.main(["run", str(path), "--out", str(tmp_path / "auto"), "--workers", "1"]) == 0
    manifest = json.loads((tmp_path / "auto" / "manifest.json").read_text())
    assert 0.0 < manifest["dt_tau"] <= 0.05


def test_invalid_config_exit_status(tmp_path):
    path = _write(tmp_path / "bad.json", {"scenario": "lossy_cavity", "n_trajectories": 0})
    assert cli.main(["run", str(path), "--out", str(tmp_path / "bad")]) == cli.EXIT_CONFIG


def test_non_dividing_dt_exit_status(tmp_path):
    path = _write(tmp_path / "dt.json", {"scenario": "lossy_cavity", "t_final": 1.0, "dt": 0.3, "n_trajectories": 1})
    assert cli.main(["run", str(path), "--out", str(tmp_path / "dt"), "--workers", "1"]) == cli.EXIT_CONFIG


def test_numerical_failure_writes_manifest(small_run, tmp_path, monkeypatch):
    def failing(*args, **kwargs):
        raise IntegrationError("step size underflow", 0.5)

    monkeypatch.setattr(cli, "run_ensemble", failing)
    out = tmp_path / "fail"
    assert cli.main(["run", str(small_run), "--out", str(out)]) == cli.EXIT_NUMERICAL
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["flags"]["integration_failures"] == 1
    assert manifest["flags"]["failed_at_time"] == 0.5


def test_linear_algebra_failure_is_numerical(small_run, tmp_path, monkeypatch):
    def singular(*args, **kwargs):
        raise np.linalg.LinAlgError("Singular matrix")

    monkeypatch.setattr(exact, "solve_ivp", singular)
    out = tmp_path / "singular"
    assert cli.run(parse_config(small_run).with_overrides(output_dir=str(out))) == cli.EXIT_NUMERICAL
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["flags"]["integration_failures"] == 1
    assert "LinAlgError" in manifest["flags"]["error"]


def test_bad_scenario_parameter_is_config_error(tmp_path):
    path = _write(tmp_path / "neg.json", {"scenario": "lossy_cavity", "parameters": {"kappa": -0.1}, "truncation": {"n_max": 2}})
    assert cli.main(["run", str(path), "--out", str(tmp_path / "neg"), "--workers", "1"]) == cli.EXIT_CONFIG


def test_paper_literal_selection_mode():
    config = config_from_dict({"scenario": "rabi", "selection_mode": "paper-literal"})
    assert config.selection_mode == SelectionMode.LITERAL.value == "paper-literal"
    with pytest.raises(ConfigError) as info:
        config_from_dict({"scenario": "rabi", "selection_mode": "first"})
    assert info.value.field == "selection_mode"
