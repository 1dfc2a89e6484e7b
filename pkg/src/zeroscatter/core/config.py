"""
Run configuration shared by every CLI subcommand.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional

from .errors import InvalidArgumentError


def default_epsilons() -> List[float]:
    """Dyadic absorption ladder 2^-4 .. 2^-14."""
    return [2.0**-j for j in range(4, 15)]


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


@dataclass(frozen=True)
class RunConfig:
    """Everything a batch run depends on; serializable to JSON."""

    symbol: Dict[str, Any] = field(
        default_factory=lambda: {"family": "internal-wave-homogeneous", "beta": 2.0}
    )
    omega: float = 0.0
    n1: int = 256
    n2: int = 256
    ks: int = 8
    epsilons: List[float] = field(default_factory=default_epsilons)
    deltas: List[float] = field(default_factory=lambda: [0.4, 0.3, 0.2])
    seeds: int = 8
    output_dir: str = "runs"
    workers: int = 1
    offset: float = 0.3
    window: float = 1.2
    packet_width: float = 0.6
    sobolev: float = -1.0
    level_spacing: Optional[float] = None
    eigen_window: List[float] = field(default_factory=lambda: [-0.05, 0.05])
    eigen_count: int = 6

    def __post_init__(self):
        if "family" not in self.symbol:
            raise InvalidArgumentError("symbol config needs a 'family' entry")
        if self.n1 < 8 or self.n2 < 8 or self.n1 % 2 or self.n2 % 2:
            raise InvalidArgumentError(
                f"grid sizes must be even and >= 8, got {self.n1}x{self.n2}"
            )
        if self.ks < 0:
            raise InvalidArgumentError(f"ks must be non-negative, got {self.ks}")
        if self.workers < 1:
            raise InvalidArgumentError(f"workers must be >= 1, got {self.workers}")
        if any(e <= 0 for e in self.epsilons):
            raise InvalidArgumentError("absorption ladder entries must be positive")
        if any(not 0 < d <= 1 for d in self.deltas):
            raise InvalidArgumentError("section ladder entries must lie in (0, 1]")
        if len(self.eigen_window) != 2 or self.eigen_window[0] > self.eigen_window[1]:
            raise InvalidArgumentError("eigen_window must be an interval [a, b]")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path: Path) -> "RunConfig":
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise InvalidArgumentError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgumentError(f"config root must be an object: {path}")
        return cls.from_dict(data)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_json(self, path: Path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        """Return a copy with every non-None override applied."""
        changes = {k: v for k, v in overrides.items() if v is not None}
        return replace(self, **changes) if changes else self

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(canonical_json(self.to_dict()).encode("utf-8")).hexdigest()
