import csv
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from decaylab import cli
from decaylab import expyard as X

SMALL_WAVE = {"n": 300, "R": 30.0}


def _wave_cfg(**sweep):
    return X.ExperimentConfig("wave-decay", grid=dict(SMALL_WAVE), sweep={"T": 10.0, "n_t": 21, **sweep})


# -- config -----------------------------------------------------------------


def test_config_round_trip(tmp_path):
    cfg = X.ExperimentConfig("resolvent-sweep", grid={"n": 300}, sweep={"lams": [1.0]}, seed=7)
    p = tmp_path / "c.json"
    cfg.save(p)
    back = X.ExperimentConfig.load(p)
    assert back == cfg and back.to_json() == cfg.to_json()
    assert back.content_hash() == cfg.content_hash()


@settings(max_examples=25, deadline=None)
@given(st.permutations(["schema", "scenario", "profile", "grid", "potential", "sweep", "seed"]))
def test_hash_independent_of_key_order(order):
    base = X.ExperimentConfig("lap-check", profile={"s": 0.5, "c": 1.0}, sweep={"lam": 2.0}).to_dict()
    shuffled = {k: base[k] for k in order}
    shuffled["profile"] = dict(reversed(list(base["profile"].items())))
    assert X.ExperimentConfig.from_dict(shuffled).content_hash() == X.ExperimentConfig.from_dict(base).content_hash()


def test_hash_ignores_out_dir_only():
    a = X.ExperimentConfig("cutoff", out_dir="a")
    assert a.content_hash() == X.ExperimentConfig("cutoff", out_dir="b").content_hash()
    assert a.content_hash() != X.ExperimentConfig("cutoff", seed=1).content_hash()


@pytest.mark.parametrize("bad", [
    {"scenario": "nope"},
    {"scenario": "cutoff", "schema": 2},
    {"scenario": "cutoff", "sweep": {"bogus": 1}},
    {"scenario": "cutoff", "seed": "x"},
    {"scenario": "cutoff", "extra": 1},
    {"sweep": {}},
])
def test_schema_violations(bad):
    with pytest.raises(X.ConfigError):
        X.ExperimentConfig.from_dict(bad)


def test_invalid_json():
    with pytest.raises(X.ConfigError):
        X.ExperimentConfig.from_json("{not json")


def test_out_dir_precedence(tmp_path, monkeypatch):
    cfg = X.ExperimentConfig("cutoff", out_dir=str(tmp_path / "cfg"))
    monkeypatch.delenv(X.OUT_ENV, raising=False)
    assert X.resolve_out_dir(cfg) == tmp_path / "cfg"
    monkeypatch.setenv(X.OUT_ENV, str(tmp_path / "env"))
    assert X.resolve_out_dir(cfg) == tmp_path / "env"
    assert X.resolve_out_dir(cfg, tmp_path / "flag") == tmp_path / "flag"


# -- runs -------------------------------------------------------------------


def test_theta_check_analytic_profile(tmp_path):
    man = X.run_experiment(X.ExperimentConfig("theta-check", profile={"s": 1.0}), tmp_path)
    assert man.passed
    assert man.summary["C_tilde"] == pytest.approx(1.0, abs=1e-12)


def test_manifest_checksums(tmp_path):
    man = X.run_experiment(X.ExperimentConfig("cutoff"), tmp_path)
    run = tmp_path / f"cutoff-{man.config_hash[:12]}"
    assert set(man.artifacts) == {p.name for p in run.iterdir() if p.name != "manifest.json"}
    assert man.verify(run)
    assert X.RunManifest.load(run / "manifest.json") == man
    (run / "config.json").write_text("{}")
    assert not man.verify(run)


def test_runs_are_deterministic(tmp_path):
    cfg = X.ExperimentConfig("kernel-verify", sweep={"k_max": 3, "n_r": 50})
    a = X.run_experiment(cfg, tmp_path / "a").to_dict()
    b = X.run_experiment(cfg, tmp_path / "b").to_dict()
    a.pop("wall_time"), b.pop("wall_time")
    assert a == b


def test_zero_data_skips_fit(tmp_path):
    man = X.run_experiment(_wave_cfg(amplitude=0.0), tmp_path)
    run = tmp_path / f"wave-decay-{man.config_hash[:12]}"
    assert man.summary["skipped"] == "zero trace"
    rows = list(csv.reader((run / "trace.csv").open()))[1:]
    assert all(float(r[1]) == 0.0 for r in rows)
    assert json.loads((run / "fit.json").read_text())["skipped"] == "zero trace"


def test_csv_full_precision(tmp_path):
    man = X.run_experiment(_wave_cfg(), tmp_path)
    run = tmp_path / f"wave-decay-{man.config_hash[:12]}"
    rows = list(csv.reader((run / "trace.csv").open()))[1:]
    assert any(len(r[1]) > 12 for r in rows)


def test_module_error_carries_scenario(tmp_path):
    cfg = X.ExperimentConfig("cutoff", profile={"s": 1.0})
    with pytest.raises(X.ScenarioError) as info:
        X.run_experiment(cfg, tmp_path)
    assert info.value.scenario == "cutoff"


# -- cli --------------------------------------------------------------------


def test_cli_check_theta_analytic(tmp_path, capsys):
    assert cli.main(["check-theta", "--s", "1.0", "--out", str(tmp_path)]) == 0
    assert "theta_conditions: PASS" in capsys.readouterr().out


def test_cli_missing_config(tmp_path):
    assert cli.main(["wave-decay", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_cli_wrong_scenario_config(tmp_path):
    p = tmp_path / "c.json"
    X.ExperimentConfig("cutoff").save(p)
    assert cli.main(["wave-decay", "--config", str(p)]) == 2


@pytest.mark.parametrize("argv", [["frobnicate"], [], ["report"], ["check-theta", "--seed", "x"]])
def test_cli_usage_errors(argv, capsys):
    assert cli.main(argv) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_scenario_failure_exit_1(tmp_path):
    assert cli.main(["build-cutoff", "--s", "1.0", "--out", str(tmp_path)]) == 1


def test_report_mixed_runs(tmp_path, capsys):
    good = X.run_experiment(X.ExperimentConfig("theta-check", profile={"s": 1.0}), tmp_path)
    bad = X.run_experiment(_wave_cfg(s_min=5.0), tmp_path)
    assert good.passed and not bad.passed
    out_csv = tmp_path.parent / f"{tmp_path.name}-report.csv"
    assert cli.main(["report", "--dir", str(tmp_path), "--csv", str(out_csv)]) == 1
    text = capsys.readouterr().out
    assert "theta-check" in text and "wave-decay" in text and "FAIL [s_hat]" in text
    rows = list(csv.DictReader(out_csv.open()))
    assert sorted(r["passed"] for r in rows) == ["False", "True"]


def test_report_idempotent(tmp_path):
    X.run_experiment(X.ExperimentConfig("theta-check", profile={"s": 1.0}), tmp_path)
    before = {p: p.read_bytes() for p in tmp_path.rglob("*") if p.is_file()}
    first = X.report(tmp_path)
    second = X.report(tmp_path)
    assert first == second and first[2]
    assert before == {p: p.read_bytes() for p in tmp_path.rglob("*") if p.is_file()}


def test_report_empty_dir_fails(tmp_path):
    rows, _, ok = X.report(tmp_path)
    assert rows == [] and not ok
