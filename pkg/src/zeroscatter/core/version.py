"""
Version lookup for zeroscatter.
"""

from pathlib import Path
from typing import Optional

import toml

UNKNOWN_VERSION = "unknown"


def find_pyproject(start: Optional[Path] = None) -> Optional[Path]:
    """Walk up from ``start`` until a pyproject.toml is found."""
    current_dir = start or Path(__file__).parent
    for parent in [current_dir] + list(current_dir.parents):
        candidate = parent / "pyproject.toml"
        if candidate.exists():
            return candidate
    return None


def get_version() -> str:
    """
    Get the package version from pyproject.toml.

    Returns:
        Version string (e.g., "0.1.0"), or "unknown" when the manifest is missing
    """
    pyproject_path = find_pyproject()
    if pyproject_path is None:
        return UNKNOWN_VERSION

    try:
        with open(pyproject_path, "r") as f:
            pyproject_data = toml.load(f)
        return pyproject_data["project"]["version"]
    except (OSError, KeyError, toml.TomlDecodeError):
        return UNKNOWN_VERSION
