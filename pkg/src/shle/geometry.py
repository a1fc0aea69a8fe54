"""Pinhole stereo camera model and the transforms between its frames.

Conventions: the camera frame is x-right, y-down, z-forward; the world frame
is x-right, y-up, z-forward with its origin at the camera centre.  World
heights above the road are obtained by adding the rig's mounting height.
The default extrinsics ``R = diag(1, -1, 1), T = 0`` map one onto the other.

All functions accept scalars or numpy arrays and broadcast.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple

import numpy as np

from .detection import BBox
from .errors import ConfigurationError, DomainError, EmptyExtractionError

ORTHOGONALITY_TOL = 1e-9


def _default_rotation() -> np.ndarray:
    return np.diag([1.0, -1.0, 1.0])


@dataclass(frozen=True, eq=False)
class CameraRig:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    baseline_m: float
    mount_height_m: float = 0.0
    rotation: np.ndarray = field(default_factory=_default_rotation)
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)

        problems = []
        if not self.fx > 0:
            problems.append(f"fx must be > 0 (got {self.fx})")
        if not self.fy > 0:
            problems.append(f"fy must be > 0 (got {self.fy})")
        if not (self.width > 0 and self.height > 0):
            problems.append(f"image size must be positive (got {self.width}x{self.height})")
        if not 0 <= self.cx < self.width:
            problems.append(f"cx must lie in [0, width) (got {self.cx})")
        if not 0 <= self.cy < self.height:
            problems.append(f"cy must lie in [0, height) (got {self.cy})")
        if not self.baseline_m > 0:
            problems.append(f"baseline_m must be > 0 (got {self.baseline_m})")
        if not self.mount_height_m >= 0:
            problems.append(f"mount_height_m must be >= 0 (got {self.mount_height_m})")
        if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
            problems.append("rotation and translation must be finite")
        elif np.max(np.abs(rotation.T @ rotation - np.eye(3))) > ORTHOGONALITY_TOL:
            problems.append("rotation must be orthogonal (R^T R = I)")
        if problems:
            raise ConfigurationError("invalid camera rig: " + "; ".join(problems))

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def __eq__(self, other):
        if not isinstance(other, CameraRig):
            return NotImplemented
        return (
            (self.fx, self.fy, self.cx, self.cy, self.width, self.height, self.baseline_m, self.mount_height_m)
            == (other.fx, other.fy, other.cx, other.cy, other.width, other.height, other.baseline_m, other.mount_height_m)
            and np.array_equal(self.rotation, other.rotation)
            and np.array_equal(self.translation, other.translation)
        )

    __hash__ = None


class _Grid:
    """Shared behaviour of per-pixel maps stored as ``(height, width)`` arrays."""

    values: np.ndarray

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def height(self) -> int:
        return self.values.shape[0]

    def valid_mask(self) -> np.ndarray:
        return np.isfinite(self.values) & (self.values > 0)

    def _check(self):
        if self.values.ndim != 2:
            raise ConfigurationError(f"{type(self).__name__} must be 2-D, got shape {self.values.shape}")


@dataclass(frozen=True, eq=False)
class DisparityMap(_Grid):
    """Sub-pixel disparities; anything non-finite or ``<= 0`` is invalid."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values))
        self._check()


@dataclass(frozen=True, eq=False)
class DepthMap(_Grid):
    """Metric depth in metres; invalid pixels hold NaN."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self._check()


class WorldPoint(NamedTuple):
    x_w: float
    y_w_prime: float
    z_w: float
    z_cam: float


@dataclass(frozen=True, eq=False)
class DevicePointCloud:
    """Points lifted from one frame's box.

    ``xyz`` holds world coordinates with the mounting height already added to
    y; ``z_cam`` keeps the camera-frame depth used by the depth filter.
    """

    xyz: np.ndarray
    z_cam: np.ndarray
    source_frame: int = -1

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64).reshape(-1, 3)
        z_cam = np.asarray(self.z_cam, dtype=np.float64).reshape(-1)
        if len(xyz) != len(z_cam):
            raise ConfigurationError("xyz and z_cam must have equal length")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "z_cam", z_cam)

    def __len__(self) -> int:
        return len(self.z_cam)

    def __iter__(self) -> Iterator[WorldPoint]:
        for (x, y, z), zc in zip(self.xyz.tolist(), self.z_cam.tolist()):
            yield WorldPoint(x, y, z, zc)

    @property
    def points(self) -> list[WorldPoint]:
        return list(self)

    @property
    def y_prime(self) -> np.ndarray:
        return self.xyz[:, 1]

    def subset(self, mask: np.ndarray) -> DevicePointCloud:
        return DevicePointCloud(self.xyz[mask], self.z_cam[mask], self.source_frame)


def _check_dims(grid: _Grid, rig: CameraRig) -> None:
    if (grid.width, grid.height) != (rig.width, rig.height):
        raise ConfigurationError(
            f"map is {grid.width}x{grid.height} but the rig expects {rig.width}x{rig.height}"
        )


def disparity_to_depth(d: DisparityMap, rig: CameraRig) -> DepthMap:
    """Depth from horizontal disparity, ``Z = B * fx / d``."""
    _check_dims(d, rig)
    values = np.asarray(d.values, dtype=np.float64)
    valid = d.valid_mask()
    depth = np.full(values.shape, np.nan)
    depth[valid] = (rig.baseline_m * rig.fx) / values[valid]
    return DepthMap(depth)


def pixel_to_camera(u, v, z_c, rig: CameraRig):
    z = np.asarray(z_c, dtype=np.float64)
    if not np.all(z > 0):
        raise DomainError("camera depth must be > 0")
    x = z * (np.asarray(u, dtype=np.float64) - rig.cx) / rig.fx
    y = z * (np.asarray(v, dtype=np.float64) - rig.cy) / rig.fy
    if np.ndim(x) == 0:
        return float(x), float(y), float(z)
    return x, y, z


def camera_to_world(p_c, rig: CameraRig) -> np.ndarray:
    """``R^-1 (p_c - T)``; ``p_c`` is ``(3,)`` or ``(N, 3)``."""
    p = np.asarray(p_c, dtype=np.float64)
    # row-vector form of R^T (p - T)
    return (p - rig.translation) @ rig.rotation


def world_to_camera(p_w, rig: CameraRig) -> np.ndarray:
    p = np.asarray(p_w, dtype=np.float64)
    return p @ rig.rotation.T + rig.translation


def apply_mount_height(y_w, rig: CameraRig):
    return y_w + rig.mount_height_m


def project_world_to_pixel(p_w, rig: CameraRig):
    """Project world points (y without mounting height) to ``(u, v, z_c)``."""
    p_c = world_to_camera(p_w, rig)
    z = p_c[..., 2]
    if not np.all(z > 0):
        raise DomainError("point lies behind the camera (z_c <= 0)")
    u = rig.fx * p_c[..., 0] / z + rig.cx
    v = rig.fy * p_c[..., 1] / z + rig.cy
    if np.ndim(z) == 0:
        return float(u), float(v), float(z)
    return u, v, z


def extract_frustum_points(box: BBox, depth: DepthMap, rig: CameraRig, frame_index: int = -1) -> DevicePointCloud:
    """Lift every valid-depth pixel centre inside ``box`` to a world point."""
    _check_dims(depth, rig)
    cols, rows = box.pixel_ranges()
    u0, u1 = max(cols.start, 0), min(cols.stop, rig.width)
    v0, v1 = max(rows.start, 0), min(rows.stop, rig.height)
    if u1 <= u0 or v1 <= v0:
        raise EmptyExtractionError(f"box {box.as_tuple()} does not cover any pixel of the image")

    patch = depth.values[v0:v1, u0:u1]
    valid = np.isfinite(patch) & (patch > 0)
    if not valid.any():
        raise EmptyExtractionError(f"no valid depth inside box {box.as_tuple()}")
    vv, uu = np.nonzero(valid)
    z = patch[vv, uu]
    x_c, y_c, z_c = pixel_to_camera(uu + u0, vv + v0, z, rig)
    world = camera_to_world(np.column_stack([x_c, y_c, z_c]), rig)
    world[:, 1] = apply_mount_height(world[:, 1], rig)
    return DevicePointCloud(world, z_c, frame_index)


def stereo_disparity(depth, rig: CameraRig):
    """Inverse of :func:`disparity_to_depth` for scalar or array depths."""
    return rig.baseline_m * rig.fx / np.asarray(depth, dtype=np.float64)

