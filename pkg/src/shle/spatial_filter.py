"""Depth-interval filtering of a lifted point cloud.

The interval centre is the mode of a Gaussian kernel density estimate over
camera depths.  Sky, trees and ground caught by the box sit far away from the
device in depth, so they fall outside ``[centre - sigma, centre + sigma]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, EmptyAfterFilterError
from .geometry import DevicePointCloud

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
# relative density difference below which two candidates count as a tie
_TIE_RTOL = 1e-12
# elements per chunk in the pairwise kernel sums
_CHUNK = 1 << 22


@dataclass(frozen=True)
class KdeConfig:
    bandwidth: float = 2.5
    coarse_steps: int = 100
    fine_steps: int = 100

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise DomainError(f"bandwidth must be > 0, got {self.bandwidth}")

    @property
    def refinement_step(self) -> float:
        return self.bandwidth / self.coarse_steps


@dataclass(frozen=True)
class DepthInterval:
    center: float
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"interval radius must be > 0, got {self.radius}")

    @property
    def low(self) -> float:
        return self.center - self.radius

    @property
    def high(self) -> float:
        return self.center + self.radius

    def contains(self, z):
        return (z >= self.low) & (z <= self.high)


def _weighted_density(x: np.ndarray, values: np.ndarray, weights: np.ndarray, h: float) -> np.ndarray:
    """Unnormalised kernel sums ``sum_i w_i exp(-((x - v_i)/h)^2 / 2)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    out = np.empty(len(x))
    step = max(1, _CHUNK // max(1, len(values)))
    for start in range(0, len(x), step):
        block = x[start:start + step, None]
        t = (block - values[None, :]) / h
        out[start:start + step] = np.exp(-0.5 * t * t) @ weights
    return out


def _as_samples(samples) -> np.ndarray:
    arr = np.asarray(samples, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise DomainError("kernel density needs at least one sample")
    if not np.all(np.isfinite(arr)):
        raise DomainError("kernel density samples must be finite")
    return arr


def kde_density(x, samples, h: float):
    """Gaussian KDE ``f(x) = 1/(h N) * sum phi((x - x_i)/h)``."""
    if not h > 0:
        raise DomainError(f"bandwidth must be > 0, got {h}")
    arr = _as_samples(samples)
    values, counts = np.unique(arr, return_counts=True)
    dens = _weighted_density(x, values, counts.astype(np.float64), h) * (_INV_SQRT_2PI / (h * arr.size))
    if np.ndim(x) == 0:
        return float(dens[0])
    return dens.reshape(np.shape(x))


def _best(grid: np.ndarray, dens: np.ndarray) -> float:
    # the first index within the tie tolerance of the maximum is the smallest depth
    top = dens.max()
    idx = int(np.argmax(dens >= top * (1.0 - _TIE_RTOL)))
    return float(grid[idx])


def kde_mode(samples, h: float, cfg: KdeConfig | None = None) -> float:
    """Depth of maximum kernel density.

    The density is evaluated at every distinct sample; the best one seeds a
    grid search over ``+-h`` with step ``h/100``, followed by a second grid of
    the same size around the coarse winner so the result is accurate to
    ``h/10000``.  Ties resolve to the smaller depth.
    """
    if not h > 0:
        raise DomainError(f"bandwidth must be > 0, got {h}")
    cfg = cfg or KdeConfig(bandwidth=h)
    arr = _as_samples(samples)
    values, counts = np.unique(arr, return_counts=True)
    weights = counts.astype(np.float64)
    if len(values) == 1:
        return float(values[0])

    at_samples = _weighted_density(values, values, weights, h)
    center = _best(values, at_samples)

    coarse_step = h / cfg.coarse_steps
    grid = center + coarse_step * np.arange(-cfg.coarse_steps, cfg.coarse_steps + 1)
    center = _best(grid, _weighted_density(grid, values, weights, h))

    fine_step = coarse_step / cfg.fine_steps
    grid = center + fine_step * np.arange(-cfg.fine_steps, cfg.fine_steps + 1)
    return _best(grid, _weighted_density(grid, values, weights, h))


def depth_filter(cloud: DevicePointCloud, z_cen: float, sigma: float) -> DevicePointCloud:
    """Keep points whose camera depth lies in ``[z_cen - sigma, z_cen + sigma]``."""
    interval = DepthInterval(z_cen, sigma)
    kept = cloud.subset(interval.contains(cloud.z_cam))
    if len(kept) == 0:
        raise EmptyAfterFilterError(
            f"no point of frame {cloud.source_frame} within [{interval.low:.3f}, {interval.high:.3f}] m"
        )
    return kept
