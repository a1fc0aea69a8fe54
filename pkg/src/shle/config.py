"""Pipeline hyper-parameters.

Field names double as the keys of the JSON config file and as the parameter
names accepted by ``shle sweep``.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import ConfigurationError

TRACKERS = ("interpolation", "ncc")
TRAFFIC_SIDES = ("right", "left")
SWEEPABLE = ("M", "sigma", "kde_bandwidth", "n_lowest", "kalman_q", "kalman_r")


@dataclass(frozen=True)
class PipelineConfig:
    M: float = 20
    sigma: float = 0.6
    kde_bandwidth: float = 2.5
    n_lowest: int = 10
    kalman_q: float = 1e-3
    kalman_r: float = 1e-2
    kalman_p0: float = 1.0
    traffic_side: str = "right"
    top_margin: float = 0.0
    tracker: str = "interpolation"
    ncc_search_radius: int = 8
    ncc_threshold: float = 0.5
    ncc_context: int = 8

    def __post_init__(self):
        problems = []
        for name in ("sigma", "kde_bandwidth", "kalman_q", "kalman_r", "kalman_p0"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and value > 0 and not math.isnan(value)):
                problems.append(f"{name} must be > 0 (got {value!r})")
        if not (isinstance(self.M, (int, float)) and self.M >= 0 and math.isfinite(self.M)):
            problems.append(f"M must be a finite value >= 0 (got {self.M!r})")
        if not (isinstance(self.n_lowest, int) and not isinstance(self.n_lowest, bool) and self.n_lowest >= 1):
            problems.append(f"n_lowest must be an integer >= 1 (got {self.n_lowest!r})")
        if self.traffic_side not in TRAFFIC_SIDES:
            problems.append(f"traffic_side must be one of {TRAFFIC_SIDES} (got {self.traffic_side!r})")
        if not (isinstance(self.top_margin, (int, float)) and self.top_margin >= 0):
            problems.append(f"top_margin must be >= 0 (got {self.top_margin!r})")
        if self.tracker not in TRACKERS:
            problems.append(f"tracker must be one of {TRACKERS} (got {self.tracker!r})")
        if not (isinstance(self.ncc_search_radius, int) and self.ncc_search_radius >= 0):
            problems.append(f"ncc_search_radius must be an integer >= 0 (got {self.ncc_search_radius!r})")
        if not (isinstance(self.ncc_context, int) and self.ncc_context >= 0):
            problems.append(f"ncc_context must be an integer >= 0 (got {self.ncc_context!r})")
        if not -1.0 <= self.ncc_threshold <= 1.0:
            problems.append(f"ncc_threshold must lie in [-1, 1] (got {self.ncc_threshold!r})")
        if problems:
            raise ConfigurationError("invalid pipeline config: " + "; ".join(problems))

    def replace(self, **changes) -> PipelineConfig:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> PipelineConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigurationError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**data)


def load_config(path: str | Path | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigurationError(f"config {path} must hold a JSON object")
    return PipelineConfig.from_dict(data)


def coerce_param(name: str, raw: str) -> float | int:
    """Parse a sweep value string for parameter ``name``."""
    if name not in SWEEPABLE:
        raise ConfigurationError(f"unknown parameter {name!r}; valid names: {', '.join(SWEEPABLE)}")
    if name == "n_lowest":
        return int(raw)
    return float(raw)
