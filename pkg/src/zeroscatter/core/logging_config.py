"""
Logging configuration for zeroscatter runs.

Every run directory gets a ``run.log`` holding the full DEBUG record (factorizations,
absorption-ladder increments, return-map iterations); the console only shows
records at the requested level.
"""

import logging
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
RUN_LOG = "run.log"
PACKAGE = "zeroscatter"


def setup_logging(
    level: str = "INFO",
    log_file: Optional[Union[str, Path]] = None,
    log_to_console: bool = True,
) -> None:
    """
    Configure the root logger for a batch run.

    Args:
        level: Console level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Per-run log file, overwritten on each run and always at DEBUG
        log_to_console: Whether to echo records to stderr
    """
    console_level = getattr(logging, level.upper())

    root = logging.getLogger()
    for handler in root.handlers:
        handler.close()
    root.handlers.clear()
    root.setLevel(logging.DEBUG if log_file else console_level)

    formatter = logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)

    if log_to_console:
        console_handler = logging.StreamHandler()
        console_handler.setLevel(console_level)
        console_handler.setFormatter(formatter)
        root.addHandler(console_handler)

    if log_file:
        log_path = Path(log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_path, mode="w", encoding="utf-8")
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    # scipy's sparse helpers log through the root at DEBUG
    logging.getLogger("scipy").setLevel(logging.WARNING)


def get_logger(name: str) -> logging.Logger:
    """
    Get a module logger under the ``zeroscatter`` namespace.

    Module names are normalized so that ``src.zeroscatter.psido`` and
    ``zeroscatter.psido`` share one logger.

    Args:
        name: Logger name (usually __name__)
    """
    head, sep, tail = name.partition(PACKAGE + ".")
    if sep:
        name = PACKAGE + "." + tail
    return logging.getLogger(name)
