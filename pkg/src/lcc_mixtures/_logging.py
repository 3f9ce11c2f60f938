import logging
import sys
from datetime import datetime as dt
from pathlib import Path
from typing import Optional

from rich.logging import RichHandler

# Custom log level for numeric issues (bound clamps, rescues, stalls), set to 26
NUMERIC_ISSUES_LVL_NUM = 26
logging.addLevelName(NUMERIC_ISSUES_LVL_NUM, "NUMERIC_ISSUES")

PACKAGE_LOGGER = "lcc_mixtures"


class ExcludeLevelFilter(logging.Filter):
    def __init__(self, level):
        super().__init__()
        self.level = level

    def filter(self, record):
        return record.levelno != self.level


class IncludeLevelFilter(logging.Filter):
    def __init__(self, level):
        super().__init__()
        self.level = level

    def filter(self, record):
        return record.levelno == self.level


def set_up_cli_logging(log_dir: Optional[Path] = None, verbose: bool = False) -> logging.Logger:
    """
    This function sets up logging for the CLI.

    Args:
        log_dir (Path, optional): Directory for the log files (default: current directory).
        verbose (bool): Also show INFO messages on the console.
    """
    logger = logging.getLogger(PACKAGE_LOGGER)
    logger.setLevel(logging.INFO)
    logger.propagate = False
    log_dir = Path(log_dir) if log_dir else Path.cwd()
    log_dir.mkdir(parents=True, exist_ok=True)
    stamp = dt.now().strftime("%Y%m%d%H%M%S")

    # Set up file and stream handlers
    file_handler = logging.FileHandler(log_dir / f"lcc_mixtures_{stamp}.log")
    file_handler.setLevel(logging.INFO)
    file_handler.addFilter(ExcludeLevelFilter(NUMERIC_ISSUES_LVL_NUM))
    file_formatter = logging.Formatter("%(asctime)s - %(levelname)s - %(message)s")
    file_handler.setFormatter(file_formatter)
    logger.addHandler(file_handler)

    if not any(
        isinstance(h, logging.StreamHandler) and h.stream == sys.stderr
        for h in logger.handlers
    ):
        stream_handler = RichHandler(
            show_level=False,
            show_time=False,
            omit_repeated_times=False,
            show_path=False,
        )
        stream_handler.setLevel(logging.INFO if verbose else logging.WARNING)
        stream_handler.addFilter(ExcludeLevelFilter(NUMERIC_ISSUES_LVL_NUM))
        stream_formatter = logging.Formatter("%(message)s")
        stream_handler.setFormatter(stream_formatter)
        logger.addHandler(stream_handler)

    # Set up numeric issues logging
    numeric_issues_handler = logging.FileHandler(log_dir / f"numeric_issues_{stamp}.log")
    numeric_issues_handler.setLevel(NUMERIC_ISSUES_LVL_NUM)
    numeric_issues_handler.addFilter(IncludeLevelFilter(NUMERIC_ISSUES_LVL_NUM))
    numeric_issues_handler.setFormatter(logging.Formatter("%(message)s"))
    logger.addHandler(numeric_issues_handler)
    return logger


def tear_down_cli_logging() -> None:
    """Close and detach the handlers installed by set_up_cli_logging."""
    logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)
    logger.propagate = True
