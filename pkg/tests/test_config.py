"""
Pytest tests for the run configuration.
"""

import json

import pytest

from src.zeroscatter.core.config import RunConfig, default_epsilons
from src.zeroscatter.core.errors import InvalidArgumentError


def test_defaults():
    """Test the default run."""
    config = RunConfig()

    assert config.symbol == {"family": "internal-wave-homogeneous", "beta": 2.0}
    assert config.n1 == config.n2 == 256
    assert config.epsilons == default_epsilons()
    assert config.epsilons[0] == 2.0**-4
    assert config.epsilons[-1] == 2.0**-14


def test_json_round_trip(tmp_path):
    """Test writing and reading a config file."""
    config = RunConfig(omega=0.1, ks=4, deltas=[0.6, 0.3])
    path = tmp_path / "run" / "config.json"

    config.to_json(path)

    assert RunConfig.from_json(path) == config


def test_unknown_keys_rejected(tmp_path):
    """Test that typos in a config file are refused."""
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"omgea": 0.1}))

    with pytest.raises(InvalidArgumentError):
        RunConfig.from_json(path)


def test_unreadable_config(tmp_path):
    """Test missing files and non-object roots."""
    with pytest.raises(InvalidArgumentError):
        RunConfig.from_json(tmp_path / "missing.json")

    path = tmp_path / "list.json"
    path.write_text("[1, 2]")
    with pytest.raises(InvalidArgumentError):
        RunConfig.from_json(path)


@pytest.mark.parametrize(
    "changes",
    [
        {"n1": 15},
        {"n2": 6},
        {"ks": -1},
        {"workers": 0},
        {"epsilons": [0.1, 0.0]},
        {"deltas": [1.5]},
        {"eigen_window": [0.1, -0.1]},
        {"symbol": {"beta": 2.0}},
    ],
)
def test_validation(changes):
    """Test that invalid settings are refused."""
    with pytest.raises(InvalidArgumentError):
        RunConfig(**changes)


def test_overrides_skip_none():
    """Test that unset flags leave the config alone."""
    config = RunConfig()

    assert config.with_overrides(omega=None) is config
    assert config.with_overrides(omega=0.2, ks=None).omega == 0.2
    assert config.with_overrides(omega=0.2).ks == config.ks


def test_config_hash_is_stable():
    """Test that the hash depends on content only."""
    assert RunConfig().config_hash() == RunConfig().config_hash()
    assert RunConfig().config_hash() != RunConfig(omega=0.1).config_hash()
    assert len(RunConfig().config_hash()) == 64
