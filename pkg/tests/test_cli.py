"""
Tests for the command-line runner: configuration loading, report files
and exit codes.
"""

from pathlib import Path

import pandas as pd
import pytest

from run_xva import ValuationRunner, load_report_rows
from src.cli.config import load_run_config
from src.cli.report import REPORT_COLUMNS, ReportRow, emit_report
from src.cli.runner import EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL, EXIT_OK, main
from src.errors import ConfigurationError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

PRICE_CONFIG = """\
label: unit
seed: 3
regime: {credit_side: unilateral_B, timing: dtm}
curves:
  discount: {flat: 0.03, horizon: 30}
  hazard_B: {flat: %(hazard)s, horizon: 30}
recovery: {phi_B: 0.4}
grid:
  pricing_dt: 0.001
portfolio:
  schedules:
    - label: zcb_6m
      zero_coupon: {maturity: 0.5}
    - label: zcb_1y
      zero_coupon: {maturity: 1.0}
"""

BILATERAL_CONFIG = """\
seed: 3
regime: {credit_side: bilateral, timing: dtm}
rho: %(rho)s
curves:
  discount: {flat: 0.03, horizon: 30}
  hazard_B: {flat: 0.02, horizon: 30}
  hazard_A: {flat: 0.01, horizon: 30}
recovery: {phi_A: 0.4, phi_B: 0.4}
portfolio:
  schedules:
    - payments: [[0.5, 1.0], [1.0, 1.0]]
"""


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    monkeypatch.delenv("XVA_PATHS", raising=False)
    monkeypatch.delenv("XVA_SEED", raising=False)


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


def run_cli(*argv):
    return main([str(a) for a in argv])


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def test_report_layout(tmp_path):
    path = emit_report([ReportRow("trade", 1.0, risky_dtm=0.99, cva_dtm=0.01)],
                       tmp_path / "report.csv", "abc", 5)
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert lines[1] == "trade,1.000000,,0.990000,,0.010000,,,abc,5"


def test_empty_report_rejected(tmp_path):
    with pytest.raises(ConfigurationError):
        emit_report([], tmp_path / "report.csv")
    assert not (tmp_path / "report.csv").exists()


def test_relative_difference():
    assert ReportRow("x", 1.0, cva_ctm=0.02, cva_dtm=0.019).relative_difference == pytest.approx(0.05)
    assert ReportRow("x", 1.0, cva_ctm=0.0, cva_dtm=0.0).relative_difference is None
    assert ReportRow("x", 1.0, cva_dtm=0.0).relative_difference is None


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def test_config_overrides(tmp_path, monkeypatch):
    path = write_config(tmp_path, PRICE_CONFIG % {"hazard": 0.02})
    assert load_run_config(path).seed == 3
    monkeypatch.setenv("XVA_SEED", "11")
    monkeypatch.setenv("XVA_PATHS", "64")
    config = load_run_config(path)
    assert (config.seed, config.paths) == (11, 64)
    assert load_run_config(path, paths=8, seed=2).seed == 2


def test_config_errors_name_the_field(tmp_path):
    bad = (PRICE_CONFIG % {"hazard": 0.02}).replace("phi_B: 0.4", "phi_B: 1.4")
    with pytest.raises(ConfigurationError) as excinfo:
        load_run_config(write_config(tmp_path, bad))
    assert excinfo.value.field == "phi_B"


def test_missing_seed(tmp_path):
    text = (PRICE_CONFIG % {"hazard": 0.02}).replace("seed: 3\n", "")
    with pytest.raises(ConfigurationError):
        load_run_config(write_config(tmp_path, text))


def test_forward_starting_equity_swap_schedule(tmp_path):
    text = (PRICE_CONFIG % {"hazard": 0.02}) + (
        "  equity_swaps:\n"
        "    - {notional: 1000000, fixed_rate: 0.03, start: 0.5, maturity: 1.5, frequency: 2}\n")
    trade = load_run_config(write_config(tmp_path, text)).trades[-1]
    assert trade.start == 0.5
    assert trade.payment_times == (1.0, 1.5)

    broken = text.replace("maturity: 1.5, frequency: 2", "maturity: 1.6, frequency: 2")
    with pytest.raises(ConfigurationError) as excinfo:
        load_run_config(write_config(tmp_path, broken))
    assert excinfo.value.field == "portfolio.equity_swaps[0].maturity"


def test_shipped_configs_load():
    for path in sorted(CONFIGS.glob("*.yaml")):
        assert load_run_config(str(path)).config_hash


# ---------------------------------------------------------------------------
# commands and exit codes
# ---------------------------------------------------------------------------

def test_price_writes_report_and_meta(tmp_path):
    config = write_config(tmp_path, PRICE_CONFIG % {"hazard": 0.02})
    out = tmp_path / "out"
    assert run_cli("price", "--config", config, "--out", out) == EXIT_OK
    lines = (out / "report.csv").read_text(encoding="utf-8").splitlines()
    assert lines[0] == ",".join(REPORT_COLUMNS)
    assert len(lines) == 3
    fields = lines[1].split(",")
    assert fields[0] == "zcb_6m"
    assert fields[2] == ""
    assert fields[4] == ""
    assert float(fields[5]) > 0.0
    meta = (out / "meta.txt").read_text(encoding="utf-8").splitlines()
    assert meta[:3] == ["command: price", "seed: 3", "paths: 1000"]
    assert "report_rows: 2" in meta
    assert "bit_generator: PCG64" in meta
    assert "python_hashseed: 3" in meta


def test_zero_hazard_reports_zero_cva(tmp_path):
    config = write_config(tmp_path, PRICE_CONFIG % {"hazard": 0.0})
    out = tmp_path / "out"
    assert run_cli("table-ctm-dtm", "--config", config, "--out", out) == EXIT_OK
    frame = pd.read_csv(out / "report.csv")
    assert (frame["cva_ctm"] == 0.0).all()
    assert (frame["cva_dtm"] == 0.0).all()
    assert frame["relative_difference"].isna().all()


def test_ctm_and_dtm_agree_on_zero_coupon_bonds(tmp_path):
    config = write_config(tmp_path, PRICE_CONFIG % {"hazard": 0.02})
    out = tmp_path / "out"
    assert run_cli("table-ctm-dtm", "--config", config, "--out", out) == EXIT_OK
    rows = load_report_rows(str(out / "report.csv"))
    assert [row["label"] for row in rows] == ["zcb_6m", "zcb_1y"]
    for row in rows:
        assert abs(row["relative_difference"]) < 0.01


def test_shipped_ctm_dtm_table_within_one_percent(tmp_path):
    out = tmp_path / "out"
    assert run_cli("table-ctm-dtm", "--config", CONFIGS / "ctm_dtm.yaml", "--out", out) == EXIT_OK
    rows = load_report_rows(str(out / "report.csv"))
    assert [row["label"] for row in rows] == ["zcb_6m", "zcb_1y", "bond_10y_4pct"]
    for row in rows:
        assert row["cva_ctm"] > 0.0 and row["cva_dtm"] > 0.0
        assert abs(row["relative_difference"]) <= 0.01


def test_monte_carlo_rerun_is_byte_identical(tmp_path):
    config = str(CONFIGS / "cva_swap.yaml")
    first, second = tmp_path / "first", tmp_path / "second"
    assert run_cli("cva", "--config", config, "--out", first, "--paths", 200) == EXIT_OK
    assert run_cli("cva", "--config", config, "--out", second, "--paths", 200, "--jobs", 2) == EXIT_OK
    assert (first / "report.csv").read_bytes() == (second / "report.csv").read_bytes()
    row = load_report_rows(str(first / "report.csv"))[0]
    assert row["seed"] == 20240607
    assert row["standard_error"] > 0.0


def test_seed_override_is_recorded(tmp_path):
    config = str(CONFIGS / "cva_swap.yaml")
    out = tmp_path / "out"
    assert run_cli("cva", "--config", config, "--out", out, "--paths", 50, "--seed", 99) == EXIT_OK
    assert load_report_rows(str(out / "report.csv"))[0]["seed"] == 99


def test_collateral_table_has_one_row_per_threshold(tmp_path):
    out = tmp_path / "out"
    config = str(CONFIGS / "collateral_sweep.yaml")
    assert run_cli("table-collateral", "--config", config, "--out", out, "--paths", 300) == EXIT_OK
    rows = load_report_rows(str(out / "report.csv"))
    assert [row["label"] for row in rows] == [
        "collateral H_B=100000", "collateral H_B=250000", "collateral H_B=500000", "collateral H_B=inf",
    ]


def test_wrongway_table_has_one_row_per_correlation(tmp_path):
    out = tmp_path / "out"
    config = str(CONFIGS / "wrongway.yaml")
    assert run_cli("table-wrongway", "--config", config, "--out", out, "--paths", 300) == EXIT_OK
    frame = pd.read_csv(out / "report.csv")
    assert frame["label"].tolist() == ["wrongway corr=0", "wrongway corr=-0.5", "wrongway corr=-1"]
    assert (frame["standard_error"] > 0.0).all()


def test_configuration_error_exit_code(tmp_path):
    config = write_config(tmp_path, BILATERAL_CONFIG % {"rho": 2.0})
    assert run_cli("price", "--config", config, "--out", tmp_path / "out") == EXIT_CONFIG
    assert not (tmp_path / "out" / "report.csv").exists()


def test_malformed_yaml_exit_code(tmp_path):
    config = write_config(tmp_path, "seed: [1, 2\ncurves: {")
    assert run_cli("price", "--config", config, "--out", tmp_path / "out") == EXIT_CONFIG


def test_command_needing_simulation_inputs(tmp_path):
    config = write_config(tmp_path, PRICE_CONFIG % {"hazard": 0.02})
    assert run_cli("cva", "--config", config, "--out", tmp_path / "out") == EXIT_CONFIG


@pytest.mark.parametrize("command, name", [
    ("cva", "cva_swap.yaml"),
    ("table-collateral", "collateral_sweep.yaml"),
    ("table-wrongway", "wrongway.yaml"),
])
def test_monte_carlo_commands_reject_ctm(tmp_path, command, name):
    text = (CONFIGS / name).read_text(encoding="utf-8").replace("timing: dtm", "timing: ctm")
    config = write_config(tmp_path, text)
    out = tmp_path / "out"
    assert run_cli(command, "--config", config, "--out", out, "--paths", 10) == EXIT_CONFIG
    assert not (out / "report.csv").exists()


def test_numerical_error_exit_code(tmp_path):
    config = write_config(tmp_path, BILATERAL_CONFIG % {"rho": 1.0})
    assert run_cli("price", "--config", config, "--out", tmp_path / "out") == EXIT_NUMERICAL


def test_io_error_exit_code(tmp_path):
    assert run_cli("price", "--config", tmp_path / "missing.yaml", "--out", tmp_path / "out") == EXIT_IO


def test_unknown_command_is_rejected_by_the_parser():
    with pytest.raises(SystemExit) as excinfo:
        main(["value-everything", "--config", "x.yaml"])
    assert excinfo.value.code == 2


# ---------------------------------------------------------------------------
# programmatic runner
# ---------------------------------------------------------------------------

def test_runner_collects_reports(tmp_path):
    good = write_config(tmp_path, PRICE_CONFIG % {"hazard": 0.02}, "good.yaml")
    bad = write_config(tmp_path, BILATERAL_CONFIG % {"rho": 1.0}, "bad.yaml")
    runner = ValuationRunner(output_dir=str(tmp_path / "out"))
    results = runner.run_commands({"price": good, "table-ctm-dtm": bad})
    assert results["price"] is not None and Path(results["price"]).exists()
    assert results["table-ctm-dtm"] is None
