"""
Command-line front end.

    python run_xva.py <command> --config <file> --out <dir> [--paths N] [--seed S]

Commands: price, cva, table-ctm-dtm, table-collateral, table-wrongway.
Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O error.
"""

import argparse
import dataclasses
import os
import sys
import time
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml

from src.cli.config import RunConfig, load_run_config
from src.cli.report import ReportRow, emit_meta, emit_report
from src.credit.risky_discounting import ModelRegime, Timing
from src.errors import ConfigurationError, NumericalError
from src.portfolio.cashflow_engine import BucketedCashflows, bucket_portfolio
from src.portfolio.collateral_engine import MarginAgreement, apply_margin_agreement
from src.pricing.lattice_pricer import PricingGrid, price_risky
from src.simulation.scenario_engine import CorrelationSpec, ScenarioCube, simulate
from src.xva.xva_engine import portfolio_cva, risky_rollback
from utils.io import create_output_directory, get_data_file_info
from utils.logger import ValuationLogger
from utils.seeding import SeedManager, get_reproducible_config

COMMANDS = ("price", "cva", "table-ctm-dtm", "table-collateral", "table-wrongway")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_MODULE = "cli"


def _require_schedules(config: RunConfig) -> None:
    if not config.schedules:
        raise ConfigurationError(_MODULE, "this command needs portfolio.schedules", field="portfolio.schedules")


def _lattice_value(config: RunConfig, schedule, timing: Timing):
    regime = ModelRegime(config.regime.credit_side, timing)
    grid = PricingGrid.build(schedule, config.pricing_dt) if timing is Timing.CTM else None
    return price_risky(schedule, regime, config.curves, config.recovery, config.rho,
                       grid=grid, b_indexed_prefactor=config.b_indexed_prefactor)


def price_command(config: RunConfig, logger: ValuationLogger) -> List[ReportRow]:
    """Lattice value of every deterministic schedule under the configured regime."""
    _require_schedules(config)
    rows = []
    for trade in config.schedules:
        result = _lattice_value(config, trade.schedule, config.regime.timing)
        logger.log_result_stats(trade.label, result.risk_free, result.risky, result.cva)
        if config.regime.timing is Timing.CTM:
            rows.append(ReportRow(trade.label, result.risk_free, risky_ctm=result.risky, cva_ctm=result.cva))
        else:
            rows.append(ReportRow(trade.label, result.risk_free, risky_dtm=result.risky, cva_dtm=result.cva))
    return rows


def table_ctm_dtm_command(config: RunConfig, logger: ValuationLogger) -> List[ReportRow]:
    """CTM and DTM values side by side with their relative CVA difference."""
    _require_schedules(config)
    rows = []
    for trade in config.schedules:
        ctm = _lattice_value(config, trade.schedule, Timing.CTM)
        dtm = _lattice_value(config, trade.schedule, Timing.DTM)
        row = ReportRow(trade.label, dtm.risk_free, risky_ctm=ctm.risky, risky_dtm=dtm.risky,
                        cva_ctm=ctm.cva, cva_dtm=dtm.cva)
        logger.debug(f"{trade.label}: CTM CVA {ctm.cva:.6f}, DTM CVA {dtm.cva:.6f}, "
                     f"difference {row.relative_difference}")
        rows.append(row)
    return rows


def _simulate(config: RunConfig, correlation: Optional[CorrelationSpec] = None) -> ScenarioCube:
    if not config.factors or config.grid is None:
        raise ConfigurationError(_MODULE, "Monte-Carlo commands need factors and grid.buckets", field="factors")
    if config.regime.timing is Timing.CTM:
        raise ConfigurationError(_MODULE, "Monte-Carlo commands roll back between bucket dates "
                                 "and support timing dtm only", field="regime.timing")
    return simulate(config.factors, correlation or config.correlation, config.grid, config.paths,
                    config.seed, n_jobs=config.n_jobs, max_step=config.max_step)


def _bucket(config: RunConfig, cube: ScenarioCube) -> BucketedCashflows:
    if not config.trades:
        raise ConfigurationError(_MODULE, "portfolio is empty", field="portfolio")
    return bucket_portfolio(config.trades, cube, config.netting, config.curves.discount)


def _monte_carlo_row(config: RunConfig, cube: ScenarioCube, buckets: BucketedCashflows,
                     label: str, margin: Optional[MarginAgreement],
                     logger: ValuationLogger) -> ReportRow:
    if margin is not None:
        buckets = apply_margin_agreement(buckets, cube, margin, config.regression,
                                         config.curves.discount).cashflows
    valuation = risky_rollback(buckets, cube, config.recovery, config.rho, config.regression,
                               config.regime.credit_side, config.curves, config.b_indexed_prefactor)
    cva = portfolio_cva(valuation)
    headline = valuation.headline
    if valuation.ridge_fallback:
        logger.warning(f"{label}: regression fell back to ridge on a rank-deficient basis")
    logger.log_result_stats(label, headline.risk_free, headline.risky, cva.mean, cva.standard_error)
    return ReportRow(label, headline.risk_free, risky_dtm=headline.risky, cva_dtm=cva.mean,
                     standard_error=cva.standard_error)


def cva_command(config: RunConfig, logger: ValuationLogger) -> List[ReportRow]:
    """Portfolio CVA by simulation and regression rollback."""
    cube = _simulate(config)
    buckets = _bucket(config, cube)
    return [_monte_carlo_row(config, cube, buckets, config.label, config.margin, logger)]


def table_collateral_command(config: RunConfig, logger: ValuationLogger) -> List[ReportRow]:
    """CVA across a threshold sweep on one side, the other side uncollateralised."""
    sweep = config.collateral_sweep
    if sweep is None:
        raise ConfigurationError(_MODULE, "table-collateral needs tables.collateral", field="tables.collateral")
    cube = _simulate(config)
    buckets = _bucket(config, cube)
    base = config.margin or MarginAgreement(margin_period=config.grid.margin_period)
    rows = []
    for threshold in sweep.thresholds:
        if sweep.side == "B":
            margin = dataclasses.replace(base, threshold_B=threshold, minimum_transfer_B=0.0,
                                         threshold_A=float("inf"))
        else:
            margin = dataclasses.replace(base, threshold_A=threshold, minimum_transfer_A=0.0,
                                         threshold_B=float("inf"))
        label = f"{config.label} H_{sweep.side}={threshold:g}"
        rows.append(_monte_carlo_row(config, cube, buckets, label, margin, logger))
    return rows


def _with_correlation(corr: CorrelationSpec, names: Sequence[str], a: str, b: str,
                      value: float) -> CorrelationSpec:
    i, j = names.index(a), names.index(b)
    matrix = np.array(corr.matrix)
    matrix[i, j] = matrix[j, i] = value
    return CorrelationSpec(tuple(map(tuple, matrix)), corr.factors)


def table_wrongway_command(config: RunConfig, logger: ValuationLogger) -> List[ReportRow]:
    """CVA across factor-hazard correlations under common random numbers."""
    sweep = config.wrongway_sweep
    if sweep is None:
        raise ConfigurationError(_MODULE, "table-wrongway needs tables.wrongway", field="tables.wrongway")
    names = [spec.name for spec in config.factors]
    rows = []
    for value in sweep.correlations:
        corr = _with_correlation(config.correlation, names, sweep.factor, sweep.hazard_factor, value)
        cube = _simulate(config, corr)
        buckets = _bucket(config, cube)
        label = f"{config.label} corr={value:g}"
        rows.append(_monte_carlo_row(config, cube, buckets, label, config.margin, logger))
    return rows


_HANDLERS = {
    "price": price_command,
    "cva": cva_command,
    "table-ctm-dtm": table_ctm_dtm_command,
    "table-collateral": table_collateral_command,
    "table-wrongway": table_wrongway_command,
}


def run(config_path: str, command: str, out_dir: Optional[str] = None,
        paths: Optional[int] = None, seed: Optional[int] = None,
        n_jobs: Optional[int] = None, logger: Optional[ValuationLogger] = None) -> Tuple[str, str]:
    """
    Execute one command and write ``report.csv`` and ``meta.txt``.

    Returns the two file paths; engine errors propagate to ``main``.
    """
    if command not in _HANDLERS:
        raise ConfigurationError(_MODULE, f"unknown command '{command}'", field="command")
    logger = logger or ValuationLogger()
    started = time.perf_counter()
    config = load_run_config(config_path, paths=paths, seed=seed, output_dir=out_dir)
    if n_jobs is not None:
        config = dataclasses.replace(config, n_jobs=n_jobs)
    SeedManager().set_seed(config.seed)
    logger.log_job_start(command, config_path, config.paths, config.seed)

    rows = _HANDLERS[command](config, logger)

    output_dir = create_output_directory(config.output_dir)
    report_path = emit_report(rows, os.path.join(output_dir, "report.csv"), config.config_hash, config.seed)
    runtime = time.perf_counter() - started
    meta_path = emit_meta(os.path.join(output_dir, "meta.txt"), config.seed, config.paths, runtime,
                          config.config_hash, command,
                          report_rows=get_data_file_info(report_path)["rows"],
                          reproducibility=get_reproducible_config())
    logger.log_job_complete(command, len(rows), output_dir, runtime)
    return report_path, meta_path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Counterparty credit risk valuation and CVA")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", default=None, help="output directory (overrides output_dir)")
    parser.add_argument("--paths", type=int, default=None, help="Monte-Carlo paths (overrides XVA_PATHS)")
    parser.add_argument("--seed", type=int, default=None, help="random seed (overrides XVA_SEED)")
    parser.add_argument("--jobs", type=int, default=None, help="joblib workers for simulation")
    parser.add_argument("--log-dir", default=None, help="also log to a dated file here")
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logger = ValuationLogger(log_dir=args.log_dir, verbose=args.verbose)
    try:
        run(args.config, args.command, args.out, args.paths, args.seed, args.jobs, logger)
    except ConfigurationError as exc:
        logger.log_job_error(args.command, str(exc))
        return EXIT_CONFIG
    except NumericalError as exc:
        logger.log_job_error(args.command, str(exc))
        return EXIT_NUMERICAL
    except np.linalg.LinAlgError as exc:
        logger.log_job_error(args.command, f"linear algebra: {exc}")
        return EXIT_NUMERICAL
    except yaml.YAMLError as exc:
        logger.log_job_error(args.command, f"config: {exc}")
        return EXIT_CONFIG
    except OSError as exc:
        logger.log_job_error(args.command, f"I/O: {exc}")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
