"""
Logging utilities for valuation runs.
Provides structured logging with file and console output.
"""

import logging
import os
import platform
import sys
from datetime import datetime
from typing import Optional

WINDOWS = platform.system() == "Windows"


def safe_symbol(symbol, fallback):
    return fallback if WINDOWS else symbol


class DataLogger:
    """
    Logger class for valuation jobs.
    Provides colored console output and file logging.
    """

    # ANSI color codes for terminal output
    COLORS = {
        'RESET': '\033[0m',
        'GREEN': '\033[92m',
        'YELLOW': '\033[93m',
        'RED': '\033[91m',
        'BLUE': '\033[94m',
        'CYAN': '\033[96m',
    }

    def __init__(self, name: str = "xva",
                 log_dir: str = "logs",
                 enable_file_logging: bool = False,
                 enable_console_colors: bool = True,
                 level: int = logging.INFO):
        """
        Initialize the logger.

        Parameters:
        -----------
        name : str, default="xva"
            Logger name
        log_dir : str, default="logs"
            Directory for log files
        enable_file_logging : bool, default=False
            Whether to save logs to a dated file in ``log_dir``
        enable_console_colors : bool, default=True
            Whether to use colored console output
        level : int, default=logging.INFO
            Handler level
        """
        self.logger = logging.getLogger(name)
        self.logger.setLevel(logging.DEBUG)
        self.logger.propagate = False
        self.enable_colors = enable_console_colors
        self.log_dir = log_dir
        self.level = level

        # Remove existing handlers to avoid duplicates
        self.logger.handlers.clear()

        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(level)
        console_handler.setFormatter(self._get_formatter())
        self.logger.addHandler(console_handler)

        self.log_file: Optional[str] = None
        if enable_file_logging:
            self._setup_file_handler()

    def _get_formatter(self) -> logging.Formatter:
        """Get formatter for logging."""
        return logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        )

    def _setup_file_handler(self) -> None:
        """Setup file handler for logging to file."""
        os.makedirs(self.log_dir, exist_ok=True)

        timestamp = datetime.now().strftime("%Y%m%d")
        self.log_file = os.path.join(self.log_dir, f"{self.logger.name}_{timestamp}.log")

        file_handler = logging.FileHandler(self.log_file)
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(self._get_formatter())
        self.logger.addHandler(file_handler)

    def attach(self, name: str = "src", level: Optional[int] = None) -> logging.Logger:
        """Route another logger (the engine modules by default) to these handlers."""
        other = logging.getLogger(name)
        other.setLevel(self.level if level is None else level)
        other.handlers.clear()
        for handler in self.logger.handlers:
            other.addHandler(handler)
        other.propagate = False
        return other

    def _colorize(self, message: str, color: str) -> str:
        """Add color to console message."""
        if not self.enable_colors:
            return message
        return f"{self.COLORS[color]}{message}{self.COLORS['RESET']}"

    def info(self, message: str) -> None:
        """Log info message (plain)."""
        self.logger.info(message)

    def success(self, message: str) -> None:
        """Log success message (green)."""
        symbol = safe_symbol("✓", "[OK]")
        self.logger.info(self._colorize(f"{symbol} {message}", 'GREEN'))

    def warning(self, message: str) -> None:
        """Log warning message (yellow)."""
        symbol = safe_symbol("⚠", "[WARN]")
        self.logger.warning(self._colorize(f"{symbol} {message}", 'YELLOW'))

    def error(self, message: str) -> None:
        """Log error message (red)."""
        symbol = safe_symbol("✗", "[ERR]")
        self.logger.error(self._colorize(f"{symbol} {message}", 'RED'))

    def debug(self, message: str) -> None:
        """Log debug message (cyan)."""
        symbol = safe_symbol("⚙", "[DBG]")
        self.logger.debug(self._colorize(f"{symbol} {message}", 'CYAN'))

    def separator(self) -> None:
        """Log a separator line."""
        self.logger.info(self._colorize("-" * 50, 'BLUE'))


def setup_logging(name: str = "src",
                  log_dir: Optional[str] = None,
                  level: int = logging.INFO) -> logging.Logger:
    """
    Setup logging for the engine modules without the colored wrapper.

    Parameters:
    -----------
    name : str, default="src"
        Logger name; "src" covers every engine module
    log_dir : str, optional
        Directory for a dated log file; console only when omitted
    level : int, default=logging.INFO
        Logging level

    Returns:
    --------
    logging.Logger
        Configured logger instance
    """
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.handlers.clear()

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        timestamp = datetime.now().strftime("%Y%m%d")
        file_handler = logging.FileHandler(os.path.join(log_dir, f"{name}_{timestamp}.log"))
        file_handler.setLevel(level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

    return logger


class ValuationLogger(DataLogger):
    """Specialized logger for CLI valuation jobs."""

    def __init__(self, log_dir: Optional[str] = None, verbose: bool = False,
                 enable_console_colors: bool = True):
        """Initialize the job logger; file logging only when ``log_dir`` is given."""
        super().__init__(
            name="xva",
            log_dir=log_dir or "logs",
            enable_file_logging=log_dir is not None,
            enable_console_colors=enable_console_colors,
            level=logging.DEBUG if verbose else logging.INFO,
        )
        self.attach("src", logging.DEBUG if verbose else logging.WARNING)

    def log_job_start(self, command: str, config_path: str, paths: Optional[int], seed: Optional[int]) -> None:
        """Log the start of a valuation job."""
        self.info(f"Starting {command}: config={config_path} paths={paths} seed={seed}")

    def log_job_complete(self, command: str, rows: int, output_dir: str, runtime: float) -> None:
        """Log successful job completion."""
        self.success(f"{command} complete: {rows} report rows written to {output_dir} in {runtime:.2f}s")

    def log_job_error(self, command: str, error: str) -> None:
        """Log a failed job."""
        self.error(f"{command} failed: {error}")

    def log_result_stats(self, label: str, risk_free: float, risky: float, cva: float,
                         standard_error: Optional[float] = None) -> None:
        """Log one valuation result."""
        msg = f"{label} | risk-free {risk_free:.6f} | risky {risky:.6f} | CVA {cva:.6f}"
        if standard_error is not None:
            msg += f" | s.e. {standard_error:.6f}"
        self.debug(msg)
