import json

import numpy as np
import pandas as pd
import pytest

from recordwalk import __version__
from recordwalk.core.analytic import DriftParams
from recordwalk.core.manifest import read_table
from recordwalk.core.series import RecordSeries
from recordwalk.interface.cli import EXIT_OK, EXIT_RUNTIME_ERROR, EXIT_USAGE_ERROR


def test_version(run_cli):
    result = run_cli("--version")
    assert result.code == EXIT_OK
    assert __version__ in result.stdout


def test_subcommand_is_required(run_cli):
    assert run_cli().code == EXIT_USAGE_ERROR


def test_theory_mean_records(run_cli):
    result = run_cli("theory", "--quantity", "mean-records", "--n-max", "2")
    assert result.code == EXIT_OK
    table = result.table()
    assert table["n"].tolist() == [0, 1, 2]
    assert table["value"].tolist() == pytest.approx([1.0, 1.5, 1.875])


def test_theory_manifest(run_cli):
    result = run_cli("theory", "--quantity", "record-rate", "--n-max", "3")
    manifest = result.manifest()
    assert manifest["subcommand"] == "theory"
    assert manifest["seed"] is None
    assert manifest["version"] == __version__
    assert len(manifest["run_id"]) == 8
    assert manifest["finished_at"] is not None
    assert manifest["parameters"]["n_max"] == 3
    assert manifest["parameters"]["regime"] == "symmetric"


def test_theory_asymptotic_rate(run_cli):
    result = run_cli("theory", "--quantity", "asymptotic-rate", "--c", "2", "--exact")
    row = result.table().iloc[0]
    assert row["value"] == pytest.approx(0.9730, abs=1e-4)
    assert row["exact"] == pytest.approx(0.9763, abs=5e-4)
    assert row["crossover"] == pytest.approx(0.568, abs=0.01)


def test_theory_asymptotic_rate_needs_positive_drift(run_cli):
    result = run_cli("theory", "--quantity", "asymptotic-rate", "--c", "0")
    assert result.code == EXIT_USAGE_ERROR
    assert "recordwalk theory: error:" in result.stderr


def test_theory_rejects_unknown_regime(run_cli):
    assert run_cli("theory", "--quantity", "record-rate", "--regime", "medium").code == EXIT_USAGE_ERROR


def test_theory_large_drift_needs_positive_drift(run_cli):
    result = run_cli("theory", "--quantity", "record-rate", "--regime", "large-drift", "--c", "0")
    assert result.code == EXIT_USAGE_ERROR


def test_theory_rejects_missing_expression(run_cli):
    result = run_cli("theory", "--quantity", "first-passage", "--regime", "large-drift", "--c", "1")
    assert result.code == EXIT_USAGE_ERROR
    assert "no large-drift expression for first-passage" in result.stderr


def test_theory_large_drift_survival_is_negative_side_only(run_cli):
    assert run_cli("theory", "--quantity", "survival", "--regime", "large-drift",
                   "--c", "2").code == EXIT_USAGE_ERROR
    result = run_cli("theory", "--quantity", "survival", "--regime", "large-drift",
                     "--c", "2", "--sign", "-", "--n-max", "1")
    assert result.table()["value"].tolist() == pytest.approx([1.0, 0.02700], abs=1e-5)


def test_theory_pi_table(run_cli):
    table = run_cli("theory", "--quantity", "pi", "--n-max", "2").table()
    assert list(table.columns) == ["n", "m", "value"]
    assert len(table) == 6
    at_two = table[table["n"] == 2]["value"].tolist()
    assert at_two == pytest.approx([3 / 8, 3 / 8, 1 / 4])


def test_theory_p_sign(run_cli):
    table = run_cli("theory", "--quantity", "p-sign", "--c", "1", "--n-max", "1").table()
    assert table["n"].tolist() == [1]
    assert table["value"].iloc[0] == pytest.approx(0.8413447460685429, abs=1e-12)


def test_theory_crossover(run_cli):
    row = run_cli("theory", "--quantity", "crossover", "--c", "0.1").table().iloc[0]
    assert row["n_star"] == pytest.approx(100.0)


def test_series_survival(run_cli):
    result = run_cli("series", "--emit", "q", "--order", "2")
    assert result.code == EXIT_OK
    assert result.table()["value"].tolist() == pytest.approx([1.0, 0.5, 0.375])


def test_series_pi_with_one_record_equals_survival(run_cli):
    q = run_cli("series", "--emit", "q", "--c", "0.1", "--order", "30").table()
    pi = run_cli("series", "--emit", "pi", "--m", "1", "--c", "0.1", "--order", "30").table()
    assert pi["value"].tolist() == pytest.approx(q["value"].tolist(), abs=1e-15)


def test_series_order_zero(run_cli):
    table = run_cli("series", "--emit", "mean", "--order", "0", "--c", "0.3").table()
    assert table["n"].tolist() == [0]
    assert table["value"].tolist() == [1.0]


def test_series_probabilities_stay_in_range(run_cli):
    table = run_cli("series", "--emit", "rate", "--c", "1", "--order", "200", "--dist", "uniform").table()
    assert table["value"].between(0.0, 1.0).all()


def test_simulate_is_reproducible_across_workers(run_cli):
    argv = ("simulate", "--c", "0.05", "--steps", "100", "--reals", "10000", "--seed", "17")
    first = run_cli(*argv, "--workers", "1")
    again = run_cli(*argv, "--workers", "3")
    assert first.code == again.code == EXIT_OK
    assert first.data_section() == again.data_section()
    assert first.manifest()["seed"] == 17
    assert again.manifest()["parameters"]["workers"] == 3


def test_simulate_rejects_zero_realizations(run_cli):
    result = run_cli("simulate", "--reals", "0")
    assert result.code == EXIT_USAGE_ERROR
    assert "--reals" in result.stderr


def test_simulate_symmetric_walk_matches_the_closed_form(run_cli):
    table = run_cli("simulate", "--steps", "50", "--reals", "20000", "--seed", "5").table()
    assert list(table.columns) == ["n", "estimate", "std_error", "lower_estimate",
                                   "lower_std_error", "analytic", "series"]
    deviation = (table["estimate"] - table["analytic"]).abs()
    assert (deviation <= 4.5 * table["std_error"] + 1e-12).all()
    assert np.allclose(table["analytic"], table["series"], atol=1e-12)


def test_simulate_flags_runs_beyond_the_small_drift_range(run_cli, caplog):
    inside = run_cli("simulate", "--c", "0.01", "--steps", "100", "--reals", "500")
    assert inside.manifest()["summary"] == {"n_star": pytest.approx(10000.0),
                                            "small_drift_regime": True}
    beyond = run_cli("simulate", "--c", "0.1", "--steps", "100", "--reals", "500")
    assert beyond.manifest()["summary"]["small_drift_regime"] is False
    assert "n* = 100" in caplog.text
    flat = run_cli("simulate", "--steps", "10", "--reals", "100")
    assert flat.manifest()["summary"] == {"n_star": None, "small_drift_regime": True}


def test_simulate_survival_without_reference(run_cli):
    table = run_cli("simulate", "--emit", "survival-neg", "--c", "0.1", "--steps", "20",
                    "--reals", "500", "--no-reference").table()
    assert list(table.columns) == ["n", "estimate", "std_error"]
    assert table["estimate"].iloc[0] == 1.0
    assert (table["estimate"].diff().dropna() <= 0).all()


def test_simulate_scaling(run_cli):
    result = run_cli("simulate", "--emit", "scaling", "--c-values", "0.1", "0.2",
                     "--steps", "10", "--reals", "1000")
    table = result.table()
    assert list(table.columns) == ["c", "n", "x", "g", "std_error", "g_small_x", "g_large_x"]
    assert len(table) == 20
    assert (table["g_large_x"] == 1.39).all()


def test_simulate_scaling_needs_positive_drifts(run_cli):
    result = run_cli("simulate", "--emit", "scaling", "--c-values", "0.1", "-0.1",
                     "--steps", "10", "--reals", "10")
    assert result.code == EXIT_USAGE_ERROR


def test_simulate_asymptotic_rate(run_cli):
    result = run_cli("simulate", "--emit", "asymptotic-rate", "--c", "1", "--steps", "60",
                     "--reals", "2000", "--tail", "20")
    table = result.table()
    assert len(table) == 1
    row = table.iloc[0]
    assert row["n_tail"] == 20
    assert row["n_star"] == pytest.approx(1.0)
    assert row["analytic"] == pytest.approx(0.7580, abs=1e-3)
    summary = result.manifest()["summary"]
    assert summary["estimate"] == pytest.approx(row["estimate"])
    assert abs(row["estimate"] - row["exact"]) <= 4 * row["std_error"] + 1e-3


def test_simulate_tail_longer_than_the_walk(run_cli):
    result = run_cli("simulate", "--emit", "asymptotic-rate", "--c", "1", "--steps", "10",
                     "--reals", "10", "--tail", "11")
    assert result.code == EXIT_USAGE_ERROR


def test_analyze_synthetic_drift_summary(run_cli):
    result = run_cli("analyze", "--synthetic", "366", "5000", "0.025", "--emit", "drift-summary")
    assert result.code == EXIT_OK
    manifest = result.manifest()
    summary = manifest["summary"]
    assert manifest["seed"] == 42
    assert summary["n_series"] == 366
    assert abs(summary["mean_c_over_sigma"] - 0.025) <= 4 * summary["std_error"]
    assert len(result.table()) == 366


def test_analyze_windowed_needs_a_window(run_cli):
    result = run_cli("analyze", "--synthetic", "2", "50", "0", "--emit", "windowed")
    assert result.code == EXIT_USAGE_ERROR
    assert "--window-len" in result.stderr


def test_analyze_windowed(run_cli):
    result = run_cli("analyze", "--synthetic", "3", "100", "0", "--emit", "windowed",
                     "--window-len", "30")
    summary = result.manifest()["summary"]
    assert summary["n_series"] == 9
    assert summary["horizon"] == 30
    assert len(result.table()) == 30


def test_analyze_rejects_bad_synthetic_arguments(run_cli):
    result = run_cli("analyze", "--synthetic", "two", "50", "0", "--emit", "raw-records")
    assert result.code == EXIT_USAGE_ERROR


def test_analyze_missing_input(run_cli, tmp_path):
    result = run_cli("analyze", "--input", str(tmp_path / "missing.csv"), "--emit", "raw-records")
    assert result.code == EXIT_RUNTIME_ERROR
    assert result.stdout == ""


def test_analyze_bad_prices(run_cli, tmp_path):
    path = tmp_path / "prices.csv"
    path.write_text("date,ticker,close\n2020-01-02,AAA,1\n2020-01-03,AAA,0\n", encoding="utf-8")
    assert run_cli("analyze", "--input", str(path), "--emit", "raw-records").code == EXIT_RUNTIME_ERROR


def test_analyze_raw_records_has_drift_references(run_cli):
    result = run_cli("analyze", "--synthetic", "5", "40", "0.1", "--emit", "raw-records")
    table = result.table()
    assert list(table.columns) == ["n", "mean_upper", "mean_lower", "symmetric_reference",
                                   "linear_drift_reference", "series_reference"]
    assert table["mean_upper"].iloc[0] == 1.0
    summary = result.manifest()["summary"]
    exact = RecordSeries.from_params(DriftParams(c=summary["mean_c_over_sigma"]), order=39)
    assert table["series_reference"].tolist() == pytest.approx(exact.mean_records.coeffs.tolist())
    assert summary["final_series_reference"] == pytest.approx(exact.mean_records.coeffs[-1])


def test_json_output(run_cli):
    result = run_cli("--json", "theory", "--quantity", "record-rate", "--n-max", "2")
    payload = json.loads(result.stdout)
    assert payload["manifest"]["subcommand"] == "theory"
    assert [row["value"] for row in payload["rows"]] == pytest.approx([1.0, 0.5, 0.375])


def test_output_file(run_cli, tmp_path):
    path = tmp_path / "out.csv"
    result = run_cli("--output", str(path), "series", "--emit", "mean", "--order", "2")
    assert result.code == EXIT_OK
    assert result.stdout == ""
    with open(path, encoding="utf-8") as stream:
        manifest, table = read_table(stream)
    assert manifest["subcommand"] == "series"
    assert table["value"].tolist() == pytest.approx([1.0, 1.5, 1.875])


def test_written_synthetic_prices_analyze_identically(run_cli, tmp_path):
    path = tmp_path / "synthetic.csv"
    generated = run_cli("analyze", "--synthetic", "4", "60", "0.05", "--seed", "9",
                        "--write-synthetic", str(path), "--emit", "drift-summary")
    reloaded = run_cli("analyze", "--input", str(path), "--emit", "drift-summary")
    assert generated.code == reloaded.code == EXIT_OK
    first, second = generated.table(), reloaded.table()
    assert first["ticker"].tolist() == second["ticker"].tolist()
    assert np.allclose(first["c_hat"], second["c_hat"], rtol=1e-9, atol=1e-12)
    assert reloaded.manifest()["seed"] is None
    assert isinstance(pd.read_csv(path), pd.DataFrame)


def test_write_synthetic_requires_synthetic(run_cli, tmp_path):
    result = run_cli("analyze", "--input", str(tmp_path / "x.csv"),
                     "--write-synthetic", str(tmp_path / "y.csv"), "--emit", "raw-records")
    assert result.code == EXIT_USAGE_ERROR
