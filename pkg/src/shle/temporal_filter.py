"""Per-frame height from the lowest points and its smoothing over time."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NoSampleError, NoSceneEstimateError
from .geometry import DevicePointCloud


@dataclass(frozen=True)
class KalmanParams:
    Q: float = 1e-3
    R: float = 1e-2
    P0: float = 1.0

    def __post_init__(self):
        if not (self.Q > 0 and self.R > 0 and self.P0 > 0):
            raise DomainError(f"Kalman variances must be > 0, got Q={self.Q}, R={self.R}, P0={self.P0}")


@dataclass
class HeightSeries:
    """Raw heights ``h_df``, filtered heights ``h_tf`` and their mean."""

    frames: list[tuple[int, float]] = field(default_factory=list)
    filtered: list[tuple[int, float]] = field(default_factory=list)
    scene_height: float = float("nan")

    @property
    def raw_values(self) -> list[float]:
        return [h for _, h in self.frames]

    @property
    def filtered_values(self) -> list[float]:
        return [h for _, h in self.filtered]


def average_lowest(cloud: DevicePointCloud, N: int) -> float:
    """Mean height of the ``N`` lowest points (all of them if fewer)."""
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    if len(cloud) == 0:
        raise NoSampleError(f"frame {cloud.source_frame} has no points to measure")
    y = cloud.y_prime
    n = min(N, len(y))
    lowest = np.partition(y, n - 1)[:n] if n < len(y) else y
    # sorted summation keeps the result independent of point order
    return float(np.mean(np.sort(lowest)))


def kalman_smooth(series, params: KalmanParams | None = None) -> list[float]:
    """Scalar Kalman filter with identity dynamics, seeded by the first value."""
    params = params or KalmanParams()
    z = [float(v) for v in series]
    if not z:
        raise DomainError("Kalman smoothing needs at least one measurement")
    x = z[0]
    p = params.P0
    out = [x]
    for meas in z[1:]:
        p_pred = p + params.Q
        gain = p_pred / (p_pred + params.R)
        x = x + gain * (meas - x)
        p = (1.0 - gain) * p_pred
        out.append(x)
    return out


def scene_height(h_tf) -> float:
    values = list(h_tf)
    if not values:
        raise NoSceneEstimateError("no frame produced a height estimate")
    return float(np.mean(np.asarray(values, dtype=np.float64)))


def build_series(raw: list[tuple[int, float]], params: KalmanParams | None = None) -> HeightSeries:
    """Run the Kalman pass over ``raw`` in frame order and average the result."""
    raw = sorted(raw)
    if not raw:
        raise NoSceneEstimateError("no frame produced a height estimate")
    smoothed = kalman_smooth([h for _, h in raw], params)
    filtered = [(idx, h) for (idx, _), h in zip(raw, smoothed)]
    return HeightSeries(raw, filtered, scene_height(smoothed))
