"""
CSV and JSON outputs with a provenance header.

Every file starts with the package version, the run's config hash and a
git-style blob hash of the body, so identical configs give identical bytes.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import pandas as pd

from ..core.config import RunConfig
from ..core.errors import InvalidArgumentError
from ..core.logging_config import get_logger
from ..core.version import get_version
from ..dynamics import LimitCycle

logger = get_logger(__name__)

FLOAT_FORMAT = "%.17g"
HEADER_PREFIX = "# zeroscatter"
CYCLE_COLUMNS = [
    "id",
    "kind",
    "x1",
    "x2",
    "theta",
    "period",
    "multiplier",
    "lambda",
    "lambda_variational",
]


def content_hash(body: bytes) -> str:
    """SHA-1 of the body wrapped as a git blob object."""
    return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


def provenance(config: RunConfig, body: bytes) -> Dict[str, str]:
    return {
        "version": get_version(),
        "config": config.config_hash(),
        "content": content_hash(body),
    }


def header_line(config: RunConfig, body: bytes) -> str:
    info = provenance(config, body)
    return f"{HEADER_PREFIX} {info['version']} config={info['config']} content={info['content']}\n"


def parse_header(line: str) -> Dict[str, str]:
    """Inverse of header_line."""
    if not line.startswith(HEADER_PREFIX):
        raise InvalidArgumentError(f"not a zeroscatter table header: {line.strip()!r}")
    parts = line[len(HEADER_PREFIX):].split()
    info = {"version": parts[0] if parts else ""}
    for part in parts[1:]:
        key, _, value = part.partition("=")
        info[key] = value
    return info


def frame_to_csv(frame: pd.DataFrame) -> bytes:
    return frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n").encode("utf-8")


def write_table(path: Path, frame: pd.DataFrame, config: RunConfig) -> str:
    """
    Write a CSV table behind its provenance header.

    Args:
        path: Destination file; parent directories are created
        frame: Table to write
        config: Run configuration whose hash goes into the header

    Returns:
        The content hash of the CSV body
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = frame_to_csv(frame)
    header = header_line(config, body)
    with open(path, "wb") as f:
        f.write(header.encode("utf-8"))
        f.write(body)
    logger.info(f"Wrote {len(frame)} rows to {path}")
    return content_hash(body)


def read_table(path: Path) -> Tuple[Dict[str, str], pd.DataFrame]:
    """Header fields and table of a file written by write_table."""
    path = Path(path)
    try:
        with open(path, "r") as f:
            header = parse_header(f.readline())
            frame = pd.read_csv(f)
    except OSError as exc:
        raise InvalidArgumentError(f"cannot read table {path}: {exc}") from exc
    return header, frame


def write_report(path: Path, report: Dict[str, Any], config: RunConfig) -> str:
    """Write a JSON report with a ``provenance`` entry; returns the content hash."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = json.dumps(report, indent=2, sort_keys=True).encode("utf-8")
    document = {"provenance": provenance(config, body), **report}
    with open(path, "w") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info(f"Wrote report to {path}")
    return document["provenance"]["content"]


def cycles_frame(cycles: Sequence[LimitCycle]) -> pd.DataFrame:
    rows: List[Dict[str, Any]] = []
    for cycle in cycles:
        estimate = cycle.lyapunov
        rows.append(
            {
                "id": cycle.id,
                "kind": cycle.kind,
                "x1": cycle.anchor.x1,
                "x2": cycle.anchor.x2,
                "theta": cycle.anchor.theta,
                "period": cycle.period,
                "multiplier": cycle.multiplier,
                "lambda": cycle.lam,
                "lambda_variational": estimate.variational if estimate else float("nan"),
            }
        )
    return pd.DataFrame(rows, columns=CYCLE_COLUMNS)
