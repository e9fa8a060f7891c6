"""
Valuation report rows and CSV emission.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import pandas as pd

from src.errors import ConfigurationError
from utils.io import save_dataframe_to_csv, save_text

_MODULE = "report"

REPORT_COLUMNS = [
    "label",
    "risk_free",
    "risky_ctm",
    "risky_dtm",
    "cva_ctm",
    "cva_dtm",
    "relative_difference",
    "standard_error",
    "config_hash",
    "seed",
]


@dataclass(frozen=True)
class ReportRow:
    label: str
    risk_free: float
    risky_ctm: Optional[float] = None
    risky_dtm: Optional[float] = None
    cva_ctm: Optional[float] = None
    cva_dtm: Optional[float] = None
    standard_error: Optional[float] = None

    @property
    def relative_difference(self) -> Optional[float]:
        """1 - CVA_DTM / CVA_CTM when both are present and CVA_CTM is non-zero."""
        if self.cva_ctm is None or self.cva_dtm is None or self.cva_ctm == 0.0:
            return None
        return 1.0 - self.cva_dtm / self.cva_ctm


def report_frame(rows: Sequence[ReportRow], config_hash: str, seed: int) -> pd.DataFrame:
    records = []
    for row in rows:
        records.append({
            "label": row.label,
            "risk_free": row.risk_free,
            "risky_ctm": row.risky_ctm,
            "risky_dtm": row.risky_dtm,
            "cva_ctm": row.cva_ctm,
            "cva_dtm": row.cva_dtm,
            "relative_difference": row.relative_difference,
            "standard_error": row.standard_error,
            "config_hash": config_hash,
            "seed": str(seed),
        })
    frame = pd.DataFrame.from_records(records, columns=REPORT_COLUMNS)
    numeric = REPORT_COLUMNS[1:8]
    frame[numeric] = frame[numeric].astype("float64")
    return frame


def emit_report(rows: Sequence[ReportRow], path: Union[str, Path],
                config_hash: str = "", seed: int = 0) -> str:
    """
    Write ``report.csv``: header plus one line per row, fixed column order,
    six decimals, empty fields for missing values. The file is written to a
    temporary name and renamed, so a failure leaves no partial report.

    Parameters:
    -----------
    rows : sequence of ReportRow
        At least one row
    path : str or Path
        Destination file
    config_hash : str
        Digest of the configuration text
    seed : int
        Run seed

    Returns:
    --------
    str
        Absolute path of the written file
    """
    if not rows:
        raise ConfigurationError(_MODULE, "a report needs at least one row")
    return save_dataframe_to_csv(report_frame(rows, config_hash, seed), path)


def emit_meta(path: Union[str, Path], seed: int, paths: int, runtime: float,
              config_hash: str, command: str, report_rows: Optional[int] = None,
              reproducibility: Optional[Mapping[str, object]] = None) -> str:
    """
    Write ``meta.txt`` with run provenance.

    ``reproducibility`` entries (generator, library versions) follow the
    fixed lines in their given order; the run seed is not repeated.
    """
    lines = [
        f"command: {command}",
        f"seed: {seed}",
        f"paths: {paths}",
        f"runtime_seconds: {runtime:.3f}",
        f"config_hash: {config_hash}",
    ]
    if report_rows is not None:
        lines.append(f"report_rows: {report_rows}")
    for key, value in (reproducibility or {}).items():
        if key != "seed":
            lines.append(f"{key}: {value}")
    return save_text("\n".join(lines) + "\n", path)
