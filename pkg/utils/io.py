"""
Input/Output utilities for valuation runs.
Handles run configuration loading, output directories and atomic report
writes (write to a temporary file, then rename) so a failed run never
leaves a partial report behind.
"""

import hashlib
import os
import tempfile
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Union

import pandas as pd
import yaml

PathLike = Union[str, Path]


def create_output_directory(output_dir: PathLike = "results") -> str:
    """
    Create output directory if it doesn't exist.

    Parameters:
    -----------
    output_dir : str, default="results"
        Path to the output directory

    Returns:
    --------
    str
        Absolute path to the created directory
    """
    os.makedirs(output_dir, exist_ok=True)
    return os.path.abspath(output_dir)


def read_config_text(filepath: PathLike) -> str:
    """Read a run configuration as text."""
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File not found: {filepath}")
    with open(filepath, "r", encoding="utf-8") as handle:
        return handle.read()


def load_yaml_config(filepath: PathLike) -> Dict[str, Any]:
    """
    Load a YAML run configuration.

    Parameters:
    -----------
    filepath : str
        Path to the YAML file

    Returns:
    --------
    dict
        Parsed mapping (empty when the file is empty)

    Raises:
    -------
    yaml.YAMLError
        On malformed YAML; the error carries the problem mark (line)
    """
    data = yaml.safe_load(read_config_text(filepath))
    return {} if data is None else data


def config_hash(text: str) -> str:
    """Short SHA-256 digest of the configuration text."""
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _atomic_write(filepath: PathLike, write) -> str:
    directory = os.path.dirname(os.path.abspath(filepath))
    os.makedirs(directory, exist_ok=True)
    fd, tmp_path = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            write(handle)
        os.replace(tmp_path, filepath)
    except BaseException:
        if os.path.exists(tmp_path):
            os.remove(tmp_path)
        raise
    return os.path.abspath(filepath)


def save_dataframe_to_csv(df: pd.DataFrame,
                          filepath: PathLike,
                          float_format: str = '%.6f') -> str:
    """
    Save DataFrame to CSV atomically with a fixed float format.

    Missing values are written as empty fields, '.' is the decimal
    separator and no thousands separators are used.

    Parameters:
    -----------
    df : pd.DataFrame
        Table to save; the index is not written
    filepath : str
        Output file path
    float_format : str, default='%.6f'
        Float precision

    Returns:
    --------
    str
        Full filepath where data was saved
    """
    return _atomic_write(
        filepath,
        lambda handle: df.to_csv(handle, index=False, float_format=float_format,
                                 na_rep="", lineterminator="\n"),
    )


def save_text(text: str, filepath: PathLike) -> str:
    """Write a text file atomically."""
    return _atomic_write(filepath, lambda handle: handle.write(text))


def load_csv_data(filepath: PathLike) -> pd.DataFrame:
    """
    Load a report CSV.

    Parameters:
    -----------
    filepath : str
        Path to the CSV file

    Returns:
    --------
    pd.DataFrame
        Loaded report
    """
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File not found: {filepath}")
    return pd.read_csv(filepath)


def get_data_file_info(filepath: PathLike) -> dict:
    """
    Get information about a report file.

    Parameters:
    -----------
    filepath : str
        Path to the report file

    Returns:
    --------
    dict
        File information (size, modification time, rows, columns)
    """
    if not os.path.exists(filepath):
        raise FileNotFoundError(f"File not found: {filepath}")

    df = pd.read_csv(filepath)
    file_stat = os.stat(filepath)

    return {
        'filename': os.path.basename(filepath),
        'filepath': str(filepath),
        'size_kb': file_stat.st_size / 1024,
        'modified': datetime.fromtimestamp(file_stat.st_mtime).strftime("%Y-%m-%d %H:%M:%S"),
        'rows': len(df),
        'columns': len(df.columns),
        'column_names': list(df.columns)
    }
