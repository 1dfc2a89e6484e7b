"""
Pytest tests for the run logging setup.
"""

import logging

from src.zeroscatter.core.logging_config import get_logger, setup_logging


def test_module_loggers_share_the_package_namespace():
    """Test that source-tree and installed module names map to one logger."""
    assert get_logger("src.zeroscatter.psido") is get_logger("zeroscatter.psido")
    assert get_logger("src.zeroscatter.psido").name == "zeroscatter.psido"
    assert get_logger("elsewhere").name == "elsewhere"


def test_run_log_records_debug_below_console_level(tmp_path):
    """Test that the per-run file keeps DEBUG records the console drops."""
    path = tmp_path / "out" / "run.log"
    setup_logging(level="WARNING", log_file=path, log_to_console=True)
    try:
        root = logging.getLogger()
        console = [h for h in root.handlers if not isinstance(h, logging.FileHandler)]
        get_logger("src.zeroscatter.psido").debug("eps=1.000e-02: H^-1 increment 3.0e-04")
        for handler in root.handlers:
            handler.flush()

        assert console[0].level == logging.WARNING
        assert "increment 3.0e-04" in path.read_text()
    finally:
        setup_logging(level="WARNING", log_to_console=False)


def test_run_log_is_overwritten(tmp_path):
    """Test that a new run starts a fresh log file."""
    path = tmp_path / "run.log"
    path.write_text("previous run\n")
    setup_logging(log_file=path, log_to_console=False)
    try:
        get_logger("zeroscatter.cli").info("config abc")
        for handler in logging.getLogger().handlers:
            handler.flush()

        text = path.read_text()
        assert "previous run" not in text
        assert "config abc" in text
    finally:
        setup_logging(level="WARNING", log_to_console=False)
