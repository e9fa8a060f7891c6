"""
Tests for the I/O, logging and seeding utilities.
"""

import logging
import os

import numpy as np
import pandas as pd
import pytest

from utils.io import (
    config_hash,
    create_output_directory,
    get_data_file_info,
    load_csv_data,
    load_yaml_config,
    save_dataframe_to_csv,
    save_text,
)
from utils.logger import ValuationLogger, setup_logging
from utils.seeding import (
    SeedManager,
    check_seed,
    get_reproducible_config,
    path_generator,
    path_seed_sequence,
)


# ---------------------------------------------------------------------------
# io
# ---------------------------------------------------------------------------

def test_create_output_directory(tmp_path):
    target = tmp_path / "nested" / "results"
    path = create_output_directory(str(target))
    assert os.path.isdir(path)
    assert os.path.isabs(path)
    assert create_output_directory(str(target)) == path


def test_csv_round_trip_with_missing_values(tmp_path):
    frame = pd.DataFrame({"label": ["a", "b"], "value": [1.0, None]})
    path = save_dataframe_to_csv(frame, tmp_path / "out.csv")
    assert open(path, encoding="utf-8").read() == "label,value\na,1.000000\nb,\n"
    loaded = load_csv_data(path)
    assert loaded["value"].isna().tolist() == [False, True]

    info = get_data_file_info(path)
    assert info["rows"] == 2
    assert info["column_names"] == ["label", "value"]


def test_failed_write_leaves_no_partial_file(tmp_path):
    class Unwritable(pd.DataFrame):
        def to_csv(self, *args, **kwargs):
            raise RuntimeError("disk full")

    with pytest.raises(RuntimeError):
        save_dataframe_to_csv(Unwritable({"x": [1.0]}), tmp_path / "report.csv")
    assert os.listdir(tmp_path) == []


def test_save_text_and_missing_files(tmp_path):
    path = save_text("seed: 1\n", tmp_path / "meta.txt")
    assert open(path, encoding="utf-8").read() == "seed: 1\n"
    with pytest.raises(FileNotFoundError):
        load_csv_data(tmp_path / "absent.csv")


def test_yaml_config(tmp_path):
    empty = tmp_path / "empty.yaml"
    empty.write_text("", encoding="utf-8")
    assert load_yaml_config(empty) == {}
    config = tmp_path / "run.yaml"
    config.write_text("seed: 4\nthresholds: [1, .inf]\n", encoding="utf-8")
    assert load_yaml_config(config) == {"seed": 4, "thresholds": [1, float("inf")]}


def test_config_hash_is_stable():
    assert config_hash("seed: 1\n") == config_hash("seed: 1\n")
    assert config_hash("seed: 1\n") != config_hash("seed: 2\n")
    assert len(config_hash("")) == 16


# ---------------------------------------------------------------------------
# logging
# ---------------------------------------------------------------------------

def test_valuation_logger_writes_dated_file(tmp_path):
    logger = ValuationLogger(log_dir=str(tmp_path), verbose=True, enable_console_colors=False)
    logger.log_job_start("cva", "run.yaml", 100, 7)
    logger.log_result_stats("swap", 1.0, 0.98, 0.02, 0.001)
    for handler in logger.logger.handlers:
        handler.flush()
    text = open(logger.log_file, encoding="utf-8").read()
    assert "Starting cva" in text
    assert "s.e. 0.001000" in text


def test_engine_warnings_reach_job_handlers(tmp_path):
    logger = ValuationLogger(log_dir=str(tmp_path), enable_console_colors=False)
    logging.getLogger("src.xva.xva_engine").warning("rank-deficient regression")
    for handler in logger.logger.handlers:
        handler.flush()
    assert "rank-deficient regression" in open(logger.log_file, encoding="utf-8").read()


def test_setup_logging_level():
    logger = setup_logging("src.test_component", level=logging.WARNING)
    assert logger.level == logging.WARNING
    assert len(logger.handlers) == 1


# ---------------------------------------------------------------------------
# seeding
# ---------------------------------------------------------------------------

def test_check_seed():
    assert check_seed(5) == 5
    for bad in (None, -1, 1.5, True):
        with pytest.raises(ValueError):
            check_seed(bad)


def test_path_substreams_are_reproducible_and_distinct():
    first = path_generator(42, 3).standard_normal(4)
    again = path_generator(42, 3).standard_normal(4)
    other = path_generator(42, 4).standard_normal(4)
    np.testing.assert_array_equal(first, again)
    assert not np.array_equal(first, other)
    assert path_seed_sequence(42, 3).spawn_key == (3,)


def test_seed_manager_pins_global_generator():
    manager = SeedManager()
    manager.set_seed(11)
    first = np.random.standard_normal(3)
    assert SeedManager() is manager
    manager.set_seed(11)
    np.testing.assert_array_equal(np.random.standard_normal(3), first)
    manager.set_seed(12)
    config = get_reproducible_config()
    assert config["seed"] == 12
    assert config["bit_generator"] == "PCG64"
    with pytest.raises(ValueError):
        manager.set_seed(-1)
    assert manager.get_seed() == 12
