import json
import math

import pandas as pd
import pytest
from click.testing import CliRunner

from cli import EXIT_COMPARISON_FAILED, EXIT_SPEC_ERROR, EXIT_VALIDATION_ERROR, cli

@pytest.fixture
def runner():
    return CliRunner()

def invoke(runner, *args):
    return runner.invoke(cli, ["--workers", "1", *args])

def test_analytic_low_rate_delay(runner, tmp_path):
    out = tmp_path / "lr.csv"
    result = invoke(runner, "analytic", "--regime", "lr", "-m", "50", "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert list(frame["delay_analytic"]) == [98.0]
    assert list(frame["provenance"]) == ["analytic"]

def test_analytic_weight_curve_json(runner, tmp_path):
    out = tmp_path / "weights.json"
    result = invoke(runner, "analytic", "--kind", "weight_curve", "--regime", "hr,l2hr", "--times", "0,1",
                    "--format", "json", "--out", str(out))
    assert result.exit_code == 0, result.output
    rows = json.loads(out.read_text())
    assert [row["expected_weight"] for row in rows] == pytest.approx([2.0, 2.0 * math.exp(0.352), 1.0, 51.0])

def test_fig13_covers_every_rate_and_threshold(runner, tmp_path):
    out = tmp_path / "fig13.csv"
    result = invoke(runner, "figure", "fig13", "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 4 * 40 * 3
    assert set(frame["m"]) == {50, 100, 200}

def test_fig13_with_longer_reveal_delay(runner, tmp_path):
    out = tmp_path / "fig13.csv"
    result = invoke(runner, "figure", "fig13", "--reveal-delay", "2", "--lambda-low", "0.25", "-m", "50",
                    "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 4 * 40
    low = frame[frame["regime"] == "lr"]
    assert low["lambda"].max() < 0.5
    assert frame[frame["regime"] == "hr"]["lambda"].min() == pytest.approx(0.5)

def test_fig10_offsets(runner, tmp_path):
    out = tmp_path / "fig10.csv"
    result = invoke(runner, "figure", "fig10", "--mu-ratio", "0.2", "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert list(frame["offset"]) == list(range(-10, 21))
    assert list(frame["alpha"]) == [max(20 - offset, 0) for offset in range(-10, 21)]

def test_attack_sweep_with_monte_carlo(runner, tmp_path):
    out = tmp_path / "attack.csv"
    result = invoke(runner, "attack-sweep", "--regime", "lr,h2lr", "-m", "20", "--mu-ratio", "0.2,0.5",
                    "--mc-replications", "2000", "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 4
    assert set(frame["provenance"]) == {"monte_carlo"}
    assert frame["prob_mc"].notna().all()
    assert set(frame["method"]) == {"formula", "distribution"}

def test_attack_formula_only(runner, tmp_path):
    out = tmp_path / "attack.csv"
    result = invoke(runner, "attack", "--regime", "hr", "-m", "50", "--mu", "10", "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert frame["prob_formula"].iloc[0] == pytest.approx(0.2)
    assert frame["prob_mc"].isna().all()

def test_unknown_regime_is_a_spec_error(runner, tmp_path):
    result = invoke(runner, "analytic", "--regime", "medium", "--out", str(tmp_path / "x.csv"))
    assert result.exit_code == EXIT_SPEC_ERROR

def test_load_condition_violation_is_a_validation_error(runner, tmp_path):
    result = invoke(runner, "analytic", "--regime", "hr", "--lambda-high", "0.5", "--lambda-low", "0.1",
                    "--out", str(tmp_path / "x.csv"))
    assert result.exit_code == EXIT_VALIDATION_ERROR
    result = invoke(runner, "analytic", "--regime", "lr", "-m", "1", "--out", str(tmp_path / "x.csv"))
    assert result.exit_code == EXIT_VALIDATION_ERROR

def test_compare_exit_codes(runner, tmp_path):
    first = tmp_path / "a.csv"
    assert invoke(runner, "analytic", "--out", str(first)).exit_code == 0
    assert invoke(runner, "compare", str(first), str(first)).exit_code == 0

    frame = pd.read_csv(first)
    frame["delay_analytic"] *= 2.0
    corrupted = tmp_path / "b.csv"
    frame.to_csv(corrupted, index=False)
    result = invoke(runner, "compare", str(first), str(corrupted), "--tolerance", "0.05")
    assert result.exit_code == EXIT_COMPARISON_FAILED

def test_compare_missing_file_is_a_spec_error(runner, tmp_path):
    result = invoke(runner, "compare", str(tmp_path / "a.csv"), str(tmp_path / "b.csv"))
    assert result.exit_code == EXIT_SPEC_ERROR

def test_run_spec_file(runner, tmp_path):
    out = tmp_path / "fig8.csv"
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"kind": "figure", "figure": "fig8", "mu_ratios": [0.2], "output": str(out)}))
    result = invoke(runner, "run", "--spec", str(spec))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert list(frame["beta"]) == list(range(0, 21))

@pytest.mark.parametrize("content", [
    '{"kind": "figure"}',
    '{"kind": "figure", "figure": "fig99"}',
    '{"kind": "weight_curve", "unknown": 1}',
    "not json",
])
def test_bad_spec_files(runner, tmp_path, content):
    spec = tmp_path / "spec.json"
    spec.write_text(content)
    assert invoke(runner, "run", "--spec", str(spec)).exit_code == EXIT_SPEC_ERROR

def test_missing_spec_file(runner, tmp_path):
    assert invoke(runner, "run", "--spec", str(tmp_path / "nope.json")).exit_code == EXIT_SPEC_ERROR

def test_simulation_output_is_reproducible(runner, tmp_path):
    args = ["simulate", "--regime", "lr", "-m", "3", "--replications", "20"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert invoke(runner, *args, "--out", str(first)).exit_code == 0
    assert invoke(runner, *args, "--out", str(second)).exit_code == 0
    assert first.read_bytes() == second.read_bytes()
    frame = pd.read_csv(first)
    assert list(frame["provenance"]) == ["simulation"]
    assert frame["delay_sim_mean"].notna().all()

def test_new_seed_changes_only_stochastic_columns(runner, tmp_path):
    args = ["simulate", "--regime", "lr,l2hr", "-m", "3", "--replications", "20"]
    first, second = tmp_path / "a.csv", tmp_path / "b.csv"
    assert invoke(runner, *args, "--seed", "1", "--out", str(first)).exit_code == 0
    assert invoke(runner, *args, "--seed", "2", "--out", str(second)).exit_code == 0
    before = pd.read_csv(first, dtype=str)
    after = pd.read_csv(second, dtype=str)
    stochastic = ["delay_sim_mean", "delay_sim_se", "seed"]
    assert before.drop(columns=stochastic).equals(after.drop(columns=stochastic))
    assert (before["delay_sim_mean"] != after["delay_sim_mean"]).all()
    assert list(after["seed"]) == ["2", "2"]

def test_fig12_with_simulation_columns(runner, tmp_path):
    out = tmp_path / "fig12.csv"
    result = invoke(runner, "figure", "fig12", "--regime", "lr,l2hr", "--replications", "5", "--out", str(out))
    assert result.exit_code == 0, result.output
    frame = pd.read_csv(out)
    assert len(frame) == 2 * 23
    assert frame["sim_mean"].notna().all()
    assert set(frame["replications"]) == {5}
