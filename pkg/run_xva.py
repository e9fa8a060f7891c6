"""
Counterparty credit risk valuation runner.

Usage:
    python run_xva.py cva --config configs/cva_swap.yaml --out results/cva

    # Or programmatically:
    from run_xva import run_command
    report_path = run_command('table-ctm-dtm', 'configs/ctm_dtm.yaml')
"""

import sys
from typing import Dict, List, Optional

from src.cli.runner import COMMANDS, main, run
from src.errors import XvaError
from utils.io import load_csv_data
from utils.logger import ValuationLogger


class ValuationRunner:
    """
    Runs valuation commands against run configurations and collects the
    resulting reports.
    """

    def __init__(self, output_dir: Optional[str] = None, log_dir: Optional[str] = None,
                 verbose: bool = False):
        """
        Initialize the runner.

        Parameters:
        -----------
        output_dir : str, optional
            Overrides each config's output_dir
        log_dir : str, optional
            Directory for dated log files
        verbose : bool, default=False
            Debug logging for the engines
        """
        self.output_dir = output_dir
        self.logger = ValuationLogger(log_dir=log_dir, verbose=verbose)

    def run_command(self, command: str, config_path: str,
                    paths: Optional[int] = None, seed: Optional[int] = None) -> Optional[str]:
        """
        Run one command; returns the report path, or None on failure.

        Parameters:
        -----------
        command : str
            One of price, cva, table-ctm-dtm, table-collateral, table-wrongway
        config_path : str
            YAML run configuration
        paths, seed : int, optional
            Overrides for the configuration

        Returns:
        --------
        str or None
            Path of report.csv
        """
        try:
            report_path, _ = run(config_path, command, self.output_dir, paths, seed, logger=self.logger)
            return report_path
        except (XvaError, OSError) as exc:
            self.logger.log_job_error(command, str(exc))
            return None

    def run_commands(self, jobs: Dict[str, str]) -> Dict[str, Optional[str]]:
        """
        Run several commands, one config each.

        Parameters:
        -----------
        jobs : dict
            Command -> config path, e.g. {'table-ctm-dtm': 'configs/ctm_dtm.yaml'}

        Returns:
        --------
        dict
            Command -> report path (None for failed jobs)
        """
        results = {}
        for command, config_path in jobs.items():
            self.logger.separator()
            results[command] = self.run_command(command, config_path)
        self.logger.separator()
        succeeded = sum(1 for path in results.values() if path is not None)
        self.logger.info(f"Completed {succeeded}/{len(jobs)} jobs")
        return results


def run_command(command: str, config_path: str, output_dir: Optional[str] = None,
                paths: Optional[int] = None, seed: Optional[int] = None) -> Optional[str]:
    """Convenience wrapper: run one command and return the report path."""
    return ValuationRunner(output_dir).run_command(command, config_path, paths, seed)


def load_report_rows(report_path: str) -> List[dict]:
    """Read a report back as a list of records."""
    return load_csv_data(report_path).to_dict(orient="records")


if __name__ == "__main__":
    if len(sys.argv) > 1 and sys.argv[1] in COMMANDS:
        sys.exit(main())
    sys.exit(main(["--help"]))
