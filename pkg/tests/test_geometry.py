from __future__ import annotations

import math

import numpy as np
import pytest

from shle.detection import BBox
from shle.errors import ConfigurationError, DomainError, EmptyExtractionError
from shle.geometry import (
    CameraRig,
    DepthMap,
    DisparityMap,
    apply_mount_height,
    camera_to_world,
    disparity_to_depth,
    extract_frustum_points,
    pixel_to_camera,
    project_world_to_pixel,
    world_to_camera,
)

from conftest import FLIP_Y


def random_rotation(rng) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    return q * np.sign(np.diag(r))


# ---------------------------------------------------------------------------
# CameraRig
# ---------------------------------------------------------------------------

class TestCameraRig:
    def test_default_extrinsics_flip_y(self):
        rig = CameraRig(700, 700, 640, 360, 1280, 720, 0.12)
        np.testing.assert_array_equal(rig.rotation, FLIP_Y)
        np.testing.assert_array_equal(rig.translation, np.zeros(3))

    @pytest.mark.parametrize("field,value", [
        ("fx", 0.0), ("fy", -1.0), ("cx", 1280.0), ("cy", -1.0), ("baseline_m", 0.0), ("mount_height_m", -0.1),
    ])
    def test_rejects_bad_intrinsics(self, field, value):
        kwargs = dict(fx=700, fy=700, cx=640, cy=360, width=1280, height=720, baseline_m=0.12)
        kwargs[field] = value
        with pytest.raises(ConfigurationError, match=field):
            CameraRig(**kwargs)

    def test_rejects_non_orthogonal_rotation(self):
        with pytest.raises(ConfigurationError, match="orthogonal"):
            CameraRig(700, 700, 640, 360, 1280, 720, 0.12, rotation=np.diag([1.0, 1.0, 1.1]))

    def test_improper_rotation_allowed(self):
        rig = CameraRig(700, 700, 640, 360, 1280, 720, 0.12, rotation=FLIP_Y)
        assert np.linalg.det(rig.rotation) == pytest.approx(-1.0)

    def test_rig_is_immutable(self, rig):
        with pytest.raises(ValueError):
            rig.rotation[0, 0] = 2.0


# ---------------------------------------------------------------------------
# disparity -> depth
# ---------------------------------------------------------------------------

class TestDisparityToDepth:
    @pytest.mark.parametrize("disparity,depth", [(8.4, 10.0), (1.2, 70.0)])
    def test_hand_values(self, rig, disparity, depth):
        values = np.full((720, 1280), disparity)
        out = disparity_to_depth(DisparityMap(values), rig)
        assert out.values[0, 0] == pytest.approx(depth, abs=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -3.0, np.nan, np.inf])
    def test_invalid_propagates(self, rig, bad):
        values = np.full((720, 1280), 8.4)
        values[5, 7] = bad
        out = disparity_to_depth(DisparityMap(values), rig)
        assert np.isnan(out.values[5, 7])
        assert out.valid_mask().sum() == 720 * 1280 - 1

    def test_dimension_mismatch(self, rig):
        with pytest.raises(ConfigurationError):
            disparity_to_depth(DisparityMap(np.ones((10, 10))), rig)

    def test_strictly_decreasing(self, rig):
        d = np.linspace(0.05, 200.0, 1280 * 720).reshape(720, 1280)
        z = disparity_to_depth(DisparityMap(d), rig).values.reshape(-1)
        assert np.all(np.diff(z) < 0)


# ---------------------------------------------------------------------------
# pixel <-> camera <-> world
# ---------------------------------------------------------------------------

class TestTransforms:
    @pytest.mark.parametrize("u,v,expected", [
        (640, 360, (0.0, 0.0, 10.0)),
        (710, 360, (1.0, 0.0, 10.0)),
        (640, 290, (0.0, -1.0, 10.0)),
    ])
    def test_pixel_to_camera(self, rig, u, v, expected):
        assert pixel_to_camera(u, v, 10.0, rig) == pytest.approx(expected, abs=1e-12)

    def test_pixel_to_camera_uses_per_axis_focal(self):
        rig = CameraRig(500, 1000, 640, 360, 1280, 720, 0.12)
        x, y, _ = pixel_to_camera(740, 460, 10.0, rig)
        assert (x, y) == pytest.approx((2.0, 1.0))

    @pytest.mark.parametrize("z", [0.0, -1.0])
    def test_pixel_to_camera_domain(self, rig, z):
        with pytest.raises(DomainError):
            pixel_to_camera(1, 1, z, rig)

    def test_camera_to_world_identity(self, identity_rig):
        np.testing.assert_allclose(camera_to_world([1, 2, 3], identity_rig), [1, 2, 3])

    def test_camera_to_world_flip(self, rig):
        np.testing.assert_allclose(camera_to_world([0, -1.0, 10], rig), [0, 1.0, 10], atol=1e-15)

    def test_camera_to_world_translation(self):
        rig = CameraRig(700, 700, 640, 360, 1280, 720, 0.12, rotation=np.eye(3), translation=[0, 0, 1])
        np.testing.assert_allclose(camera_to_world([0, 0, 3], rig), [0, 0, 2])

    @pytest.mark.parametrize("y,mount,expected", [(1.0, 1.45, 2.45), (0.0, 0.0, 0.0), (-1.45, 1.45, 0.0)])
    def test_mount_height(self, y, mount, expected):
        rig = CameraRig(700, 700, 640, 360, 1280, 720, 0.12, mount_height_m=mount)
        assert apply_mount_height(y, rig) == pytest.approx(expected, abs=1e-15)

    def test_project_bar_edge(self, rig):
        u, v, z = project_world_to_pixel([0.0, 2.05, 10.0], rig)
        assert v == pytest.approx(216.5, abs=1e-12)
        assert (u, z) == pytest.approx((640.0, 10.0))

    def test_project_optical_axis(self, rig):
        u, v, _ = project_world_to_pixel([0.0, 0.0, 25.0], rig)
        assert (u, v) == (640.0, 360.0)

    def test_project_behind_camera(self, rig):
        with pytest.raises(DomainError):
            project_world_to_pixel([0.0, 0.0, -1.0], rig)

    def test_round_trip_random(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            rig = CameraRig(
                rng.uniform(300, 1500), rng.uniform(300, 1500), rng.uniform(0, 1280), rng.uniform(0, 720),
                1280, 720, 0.12, rng.uniform(0, 2), random_rotation(rng), rng.normal(size=3),
            )
            u = rng.uniform(0, 1280, 500)
            v = rng.uniform(0, 720, 500)
            z = rng.uniform(0.5, 200, 500)
            world = camera_to_world(np.column_stack(pixel_to_camera(u, v, z, rig)), rig)
            u2, v2, z2 = project_world_to_pixel(world, rig)
            np.testing.assert_allclose(u2, u, rtol=0, atol=1e-9)
            np.testing.assert_allclose(v2, v, rtol=0, atol=1e-9)
            np.testing.assert_allclose(z2, z, rtol=0, atol=1e-9)

    def test_rigid_motion_inverse(self):
        rng = np.random.default_rng(3)
        rig = CameraRig(700, 700, 640, 360, 1280, 720, 0.12, rotation=random_rotation(rng), translation=[1, -2, 3])
        p = rng.normal(size=(100, 3)) * 10
        np.testing.assert_allclose(world_to_camera(camera_to_world(p, rig), rig), p, rtol=0, atol=1e-12)


# ---------------------------------------------------------------------------
# frustum extraction
# ---------------------------------------------------------------------------

class TestFrustum:
    def test_single_pixel_at_principal_point(self, rig):
        depth = DepthMap(np.full((720, 1280), 10.0))
        cloud = extract_frustum_points(BBox(640, 360, 1, 1), depth, rig)
        assert len(cloud) == 1
        (point,) = cloud.points
        assert point == pytest.approx((0.0, 1.45, 10.0, 10.0), abs=1e-12)

    def test_invalid_region(self, rig):
        values = np.full((720, 1280), 10.0)
        values[100:200, 100:200] = np.nan
        with pytest.raises(EmptyExtractionError):
            extract_frustum_points(BBox(110, 110, 50, 50), DepthMap(values), rig)

    def test_box_outside_image(self, rig):
        with pytest.raises(EmptyExtractionError):
            extract_frustum_points(BBox(2000, 10, 5, 5), DepthMap(np.ones((720, 1280))), rig)

    def test_samples_integer_pixel_centres(self, rig):
        depth = DepthMap(np.full((720, 1280), 5.0))
        cloud = extract_frustum_points(BBox(10.2, 20.5, 3.0, 2.0), depth, rig)
        # centres with x_min <= c < x_max: columns 11..13, rows 21..22
        assert len(cloud) == 6
        assert set(np.round(cloud.xyz[:, 0] * 700 / 5 + 640).astype(int)) == {11, 12, 13}

    def test_integer_box_edges_half_open(self, rig):
        depth = DepthMap(np.full((720, 1280), 5.0))
        assert len(extract_frustum_points(BBox(10, 20, 3, 2), depth, rig)) == 6

    def test_reprojection_inside_box(self, rig):
        rng = np.random.default_rng(5)
        depth = DepthMap(rng.uniform(2.0, 80.0, size=(720, 1280)))
        for _ in range(20):
            box = BBox(rng.uniform(0, 1100), rng.uniform(0, 600), rng.uniform(1, 150), rng.uniform(1, 100))
            cloud = extract_frustum_points(box, depth, rig)
            world = cloud.xyz.copy()
            world[:, 1] -= rig.mount_height_m
            u, v, z = project_world_to_pixel(world, rig)
            assert np.all(u >= box.x_min - 0.5) and np.all(u <= box.x_max + 0.5)
            assert np.all(v >= box.y_min - 0.5) and np.all(v <= box.y_max + 0.5)
            np.testing.assert_allclose(z, cloud.z_cam, rtol=1e-12)

    def test_points_keep_camera_depth(self, rig):
        values = np.full((720, 1280), np.nan)
        values[300:305, 600:610] = 12.5
        cloud = extract_frustum_points(BBox(590, 290, 40, 40), DepthMap(values), rig, frame_index=4)
        assert cloud.source_frame == 4
        assert len(cloud) == 50
        assert np.all(cloud.z_cam == 12.5)
        assert math.isclose(cloud.xyz[:, 2].max(), 12.5)
