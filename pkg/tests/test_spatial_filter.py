from __future__ import annotations

import math

import numpy as np
import pytest

from shle.errors import DomainError, EmptyAfterFilterError
from shle.geometry import DevicePointCloud
from shle.spatial_filter import DepthInterval, depth_filter, kde_density, kde_mode


def brute_density(x, samples, h):
    """Direct transcription of the kernel sum, one point at a time."""
    total = 0.0
    for s in samples:
        t = (x - s) / h
        total += math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    return total / (h * len(samples))


def brute_mode(samples, h, step):
    lo, hi = float(np.min(samples)), float(np.max(samples))
    grid = np.arange(lo, hi + step / 2, step)
    t = (grid[:, None] - np.asarray(samples)[None, :]) / h
    dens = np.exp(-0.5 * t * t).sum(axis=1)
    return float(grid[np.argmax(dens)])


def cloud_from_depths(depths) -> DevicePointCloud:
    z = np.asarray(depths, dtype=float)
    xyz = np.column_stack([np.arange(len(z), dtype=float), np.ones(len(z)), z])
    return DevicePointCloud(xyz, z, source_frame=3)


class TestDensity:
    def test_peak_of_single_sample(self):
        assert kde_density(0.0, [0.0], 1.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-15)

    def test_symmetry(self):
        samples = [-3.0, -1.0, 1.0, 3.0]
        for a in (0.3, 1.7, 4.2):
            assert kde_density(a, samples, 0.8) == pytest.approx(kde_density(-a, samples, 0.8), rel=1e-14)

    def test_multiplicity_invariance(self):
        samples = [1.0, 2.5, 2.6, 9.0]
        x = np.linspace(0, 10, 21)
        np.testing.assert_allclose(kde_density(x, samples * 2, 1.3), kde_density(x, samples, 1.3), rtol=1e-14)

    def test_matches_direct_sum(self):
        rng = np.random.default_rng(0)
        samples = rng.uniform(0, 30, 40)
        for x in (0.0, 7.7, 15.0, 29.9):
            assert kde_density(x, samples, 2.5) == pytest.approx(brute_density(x, samples, 2.5), rel=1e-12)

    def test_integrates_to_one(self):
        samples = np.array([2.0, 3.5, 3.6, 11.0, 40.0])
        h = 2.5
        x = np.linspace(samples.min() - 10 * h, samples.max() + 10 * h, 200001)
        f = kde_density(x, samples, h)
        integral = np.sum((f[1:] + f[:-1]) * np.diff(x)) / 2
        assert integral == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("samples,h", [([], 1.0), ([1.0], 0.0), ([1.0], -2.0)])
    def test_domain_errors(self, samples, h):
        with pytest.raises(DomainError):
            kde_density(0.0, samples, h)


class TestMode:
    def test_single_sample(self):
        assert kde_mode([7.3], 2.5) == 7.3

    def test_cluster_and_outlier(self):
        samples = [5.0] * 9 + [50.0]
        oracle = brute_mode(samples, 2.5, 2.5 / 1000)
        assert abs(kde_mode(samples, 2.5) - 5.0) <= 2.5 / 100
        assert abs(kde_mode(samples, 2.5) - oracle) <= 2 * 2.5 / 1000

    def test_exact_tie_goes_to_smaller_depth(self):
        samples = [1.0] * 5 + [9.0] * 5
        assert kde_density(1.0, samples, 0.5) == kde_density(9.0, samples, 0.5)
        assert kde_mode(samples, 0.5) == pytest.approx(1.0, abs=1e-12)

    def test_empty(self):
        with pytest.raises(DomainError):
            kde_mode([], 2.5)

    def test_not_below_any_sample_density(self):
        rng = np.random.default_rng(4)
        samples = np.concatenate([rng.normal(12, 0.3, 60), rng.uniform(5, 80, 40)])
        mode = kde_mode(samples, 2.5)
        assert kde_density(mode, samples, 2.5) >= np.max(kde_density(samples, samples, 2.5)) - 1e-12

    def test_shift_equivariance(self):
        rng = np.random.default_rng(9)
        samples = np.concatenate([rng.normal(20, 0.5, 80), rng.uniform(1, 100, 20)])
        base = kde_mode(samples, 2.5)
        for c in (-7.0, 3.25, 100.0):
            assert kde_mode(samples + c, 2.5) == pytest.approx(base + c, abs=2.5 / 100)

    def test_random_multisets_against_grid(self):
        rng = np.random.default_rng(21)
        h = 2.5
        for _ in range(25):
            n = int(rng.integers(10, 400))
            samples = np.round(np.concatenate([
                rng.normal(rng.uniform(5, 60), rng.uniform(0.1, 2.0), n),
                rng.uniform(1, 100, n // 4),
            ]), 2)
            assert abs(kde_mode(samples, h) - brute_mode(samples, h, h / 1000)) <= 2 * h / 1000


class TestDepthFilter:
    def test_example(self):
        kept = depth_filter(cloud_from_depths([9.5, 10.2, 30.0]), 10.0, 0.6)
        assert kept.z_cam.tolist() == [9.5, 10.2]
        assert kept.source_frame == 3

    def test_closed_interval(self):
        kept = depth_filter(cloud_from_depths([9.0, 10.0, 11.0, 11.0001]), 10.0, 1.0)
        assert kept.z_cam.tolist() == [9.0, 10.0, 11.0]

    def test_wide_interval_is_identity(self):
        cloud = cloud_from_depths([1.0, 50.0, 3.0])
        kept = depth_filter(cloud, 20.0, 1000.0)
        np.testing.assert_array_equal(kept.xyz, cloud.xyz)

    def test_all_outside(self):
        with pytest.raises(EmptyAfterFilterError):
            depth_filter(cloud_from_depths([1.0, 2.0]), 10.0, 0.6)

    def test_idempotent_subset(self):
        rng = np.random.default_rng(2)
        cloud = cloud_from_depths(rng.uniform(5, 15, 300))
        once = depth_filter(cloud, 10.0, 0.6)
        twice = depth_filter(once, 10.0, 0.6)
        np.testing.assert_array_equal(once.xyz, twice.xyz)
        assert set(once.z_cam.tolist()) <= set(cloud.z_cam.tolist())

    def test_nonpositive_sigma(self):
        with pytest.raises(DomainError):
            DepthInterval(10.0, 0.0)
