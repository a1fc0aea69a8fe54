"""Synthetic stereo scenes with exact ground truth.

A scene is an overhead bar (an axis-aligned box in world coordinates) above a
flat road under an untextured sky.  Each pixel centre is ray-cast against
the bar and the ground plane ``y' = 0``; the nearest hit gives its depth and
disparity follows from the stereo baseline.  Sky pixels carry disparity 0
(no stereo match) unless ``background_depth_m`` places a flat backdrop.  Detections are the bar's projected extent plus optional decoys
laid out to trip each branch of the box filter rule.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .detection import BBox, clamp_bbox
from .errors import ConfigurationError, DegenerateSpecError, UsageError
from .geometry import CameraRig, DisparityMap, project_world_to_pixel
from .io_formats import Manifest, ManifestFrame, rig_from_json, write_image, write_manifest, write_pfm

BAR_INTENSITY = 0.2
BACKGROUND_INTENSITY = 0.8
TRUE_BOX_SCORE = 0.9
SPURIOUS_MAX_DEPTH_M = 500.0
DECOY_KINDS = ("left", "low", "top")

# independent random streams, so one perturbation never shifts another
_STREAM_NOISE, _STREAM_SPURIOUS, _STREAM_DROPOUT, _STREAM_DECOYS = range(4)


def default_rig() -> CameraRig:
    return CameraRig(
        fx=700.0, fy=700.0, cx=640.0, cy=360.0, width=1280, height=720,
        baseline_m=0.12, mount_height_m=1.45,
    )


@dataclass(frozen=True)
class SceneSpec:
    rig: CameraRig = field(default_factory=default_rig)
    bar_height_m: float = 3.5
    bar_thickness_m: float = 0.3
    bar_x_extent_m: float = 4.0
    depth_trajectory: tuple[float, ...] = tuple(np.linspace(70.0, 10.0, 60).tolist())
    noise: float = 0.0
    spurious_fraction: float = 0.0
    detection_dropout: float = 0.0
    decoy_boxes: int = 0
    seed: int = 0
    # lateral centre of the bar; one value, or one per frame
    bar_x_center_m: float | tuple[float, ...] = 1.05
    # extent of the bar along the viewing direction; 0 renders a flat front face
    bar_depth_m: float = 0.0
    # None: sky without stereo match; a number: constant-depth backdrop
    background_depth_m: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "depth_trajectory", tuple(float(z) for z in self.depth_trajectory))
        if not isinstance(self.bar_x_center_m, (int, float)):
            object.__setattr__(self, "bar_x_center_m", tuple(float(x) for x in self.bar_x_center_m))
        problems = []
        if not self.depth_trajectory:
            problems.append("depth_trajectory must not be empty")
        if any(not (z > 0 and math.isfinite(z)) for z in self.depth_trajectory):
            problems.append("all trajectory depths must be finite and > 0")
        if isinstance(self.bar_x_center_m, tuple) and len(self.bar_x_center_m) != len(self.depth_trajectory):
            problems.append("bar_x_center_m must have one value per frame")
        if not self.bar_thickness_m > 0:
            problems.append("bar_thickness_m must be > 0")
        if not self.bar_x_extent_m > 0:
            problems.append("bar_x_extent_m must be > 0")
        if not self.bar_depth_m >= 0:
            problems.append("bar_depth_m must be >= 0")
        if not self.bar_height_m >= 0:
            problems.append("bar_height_m must be >= 0")
        if not self.noise >= 0:
            problems.append("noise must be >= 0")
        for name in ("spurious_fraction", "detection_dropout"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                problems.append(f"{name} must lie in [0, 1]")
        if not (isinstance(self.decoy_boxes, int) and self.decoy_boxes >= 0):
            problems.append("decoy_boxes must be an integer >= 0")
        if self.background_depth_m is not None and not self.background_depth_m > 0:
            problems.append("background_depth_m must be > 0")
        if problems:
            raise ConfigurationError("invalid scene spec: " + "; ".join(problems))

    @property
    def n_frames(self) -> int:
        return len(self.depth_trajectory)

    def x_center(self, t: int) -> float:
        if isinstance(self.bar_x_center_m, tuple):
            return self.bar_x_center_m[t]
        return float(self.bar_x_center_m)

    def bar_bounds(self, t: int) -> tuple[np.ndarray, np.ndarray]:
        """World-frame box corners (y without mounting height) at frame ``t``."""
        xc, half = self.x_center(t), self.bar_x_extent_m / 2.0
        y0 = self.bar_height_m - self.rig.mount_height_m
        z0 = self.depth_trajectory[t]
        lo = np.array([xc - half, y0, z0])
        hi = np.array([xc + half, y0 + self.bar_thickness_m, z0 + self.bar_depth_m])
        return lo, hi


@dataclass
class GroundTruth:
    boxes: dict[int, BBox | None]
    lower_edge_heights: dict[int, float]
    scene_height: float


@dataclass
class SyntheticScene:
    spec: SceneSpec
    manifest: Manifest
    truth: GroundTruth

    @property
    def frames(self) -> list[ManifestFrame]:
        return self.manifest.frames


def _rays(rig: CameraRig) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel world direction per unit camera depth, and the camera centre."""
    v, u = np.mgrid[0:rig.height, 0:rig.width].astype(np.float64)
    ray_c = np.stack([(u - rig.cx) / rig.fx, (v - rig.cy) / rig.fy, np.ones_like(u)], axis=-1)
    direction = ray_c @ rig.rotation  # R^T r, row form
    origin = -rig.translation @ rig.rotation
    return direction, origin


def _box_entry_depth(direction: np.ndarray, origin: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Camera depth where each ray enters the box ``[lo, hi]``; inf on a miss."""
    t_enter = np.full(direction.shape[:2], -np.inf)
    t_exit = np.full(direction.shape[:2], np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in range(3):
            d = direction[..., axis]
            a = (lo[axis] - origin[axis]) / d
            b = (hi[axis] - origin[axis]) / d
            near = np.minimum(a, b)
            far = np.maximum(a, b)
            parallel = d == 0
            inside = (lo[axis] <= origin[axis]) & (origin[axis] <= hi[axis])
            near = np.where(parallel, np.where(inside, -np.inf, np.inf), near)
            far = np.where(parallel, np.where(inside, np.inf, -np.inf), far)
            t_enter = np.maximum(t_enter, near)
            t_exit = np.minimum(t_exit, far)
    hit = (t_enter <= t_exit) & (t_enter > 0)
    return np.where(hit, t_enter, np.inf)


def _ground_depth(direction: np.ndarray, origin: np.ndarray, ground_y: float) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (ground_y - origin[1]) / direction[..., 1]
    return np.where(np.isfinite(t) & (t > 0), t, np.inf)


def analytic_box(spec: SceneSpec, t: int) -> BBox | None:
    """Image-clipped projection of the bar at frame ``t``; ``None`` if unseen."""
    rig = spec.rig
    lo, hi = spec.bar_bounds(t)
    corners = np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])
    z_c = (corners @ rig.rotation.T + rig.translation)[:, 2]
    if np.any(z_c <= 0):
        return None
    u, v, _ = project_world_to_pixel(corners, rig)
    box = BBox(float(u.min()), float(v.min()), float(u.max() - u.min()), float(v.max() - v.min()), TRUE_BOX_SCORE)
    return clamp_bbox(box, rig.width, rig.height)


def _bar_window(spec: SceneSpec, t: int) -> tuple[slice, slice] | None:
    """Pixel window that contains the bar's projection, with a 1 px margin."""
    box = analytic_box(spec, t)
    if box is None:
        return None
    rig = spec.rig
    v0 = max(int(np.floor(box.y_min)) - 1, 0)
    v1 = min(int(np.ceil(box.y_max)) + 2, rig.height)
    u0 = max(int(np.floor(box.x_min)) - 1, 0)
    u1 = min(int(np.ceil(box.x_max)) + 2, rig.width)
    return slice(v0, v1), slice(u0, u1)


def _static_depth(spec: SceneSpec, rays) -> np.ndarray:
    """Depth of everything but the bar: ground plane, then backdrop or sky."""
    direction, origin = rays
    depth = _ground_depth(direction, origin, -spec.rig.mount_height_m)
    if spec.background_depth_m is not None:
        depth = np.minimum(depth, spec.background_depth_m)
    return depth


def _render_bar(spec: SceneSpec, t: int, rays, static) -> tuple[tuple[slice, slice], np.ndarray, np.ndarray] | None:
    """Depth and bar mask inside the bar window of frame ``t``."""
    window = _bar_window(spec, t)
    if window is None:
        return None
    direction, origin = rays
    lo, hi = spec.bar_bounds(t)
    bar = _box_entry_depth(direction[window], origin, lo, hi)
    base = static[window]
    # sky behind sky is inf <= inf; only a finite entry depth is a hit
    hit = np.isfinite(bar) & (bar <= base)
    return window, np.where(hit, bar, base), hit


def render_frame(spec: SceneSpec, t: int, rays=None, static=None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Noise-free camera depth (inf for sky), bar mask and intensity image."""
    rays = rays if rays is not None else _rays(spec.rig)
    static = static if static is not None else _static_depth(spec, rays)
    depth = static.copy()
    bar_mask = np.zeros(depth.shape, dtype=bool)
    image = np.full(depth.shape, BACKGROUND_INTENSITY, dtype=np.float32)
    rendered = _render_bar(spec, t, rays, static)
    if rendered is not None:
        window, bar_depth, hit = rendered
        depth[window] = bar_depth
        bar_mask[window] = hit
        image[window][hit] = BAR_INTENSITY
    return depth, bar_mask, image


def _to_disparity(depth: np.ndarray, rig: CameraRig) -> np.ndarray:
    return (rig.baseline_m * rig.fx / depth).astype(np.float32)


def _frame_rng(seed: int, stream: int, t: int) -> np.random.Generator:
    return np.random.default_rng([seed, stream, t])


def _add_noise(disparity: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    """Gaussian noise on matched pixels; unmatched (<= 0) pixels stay unmatched."""
    if std == 0:
        return disparity
    noisy = (disparity + rng.normal(0.0, std, size=disparity.shape)).astype(np.float32)
    return np.where(disparity > 0, noisy, disparity)


def _add_spurious(disparity: np.ndarray, fraction: float, spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    if fraction == 0:
        return disparity
    out = disparity.copy()
    n = int(round(fraction * out.size))
    picks = rng.choice(out.size, size=n, replace=False)
    rig = spec.rig
    # mismatches span depths from 1 m out to 500 m
    low = rig.baseline_m * rig.fx / SPURIOUS_MAX_DEPTH_M
    high = rig.baseline_m * rig.fx / 1.0
    out.reshape(-1)[picks] = rng.uniform(low, high, size=n).astype(np.float32)
    return out


def _decoy(kind: str, truth: BBox, rig: CameraRig, rng: np.random.Generator) -> BBox:
    W, H = rig.width, rig.height
    w = rng.uniform(40.0, 160.0)
    h = rng.uniform(15.0, 60.0)
    true_cx, true_cy = truth.center

    def pick(lo, hi):
        return rng.uniform(lo, hi) if hi > lo else (lo + hi) / 2.0

    if kind == "left":
        cx = pick(0.05 * W, min(0.2 * W, true_cx - 20.0))
        cy = pick(h / 2.0 + 5.0, 0.6 * H)
        y_min = cy - h / 2.0
    elif kind == "top":
        cx = pick(0.25 * W, min(0.45 * W, true_cx - 10.0))
        y_min = 0.0
    else:  # low
        cx = pick(true_cx + 10.0, W - w / 2.0 - 1.0)
        cy = pick(max(0.8 * H, true_cy + 10.0), H - h / 2.0 - 1.0)
        y_min = cy - h / 2.0
    box = BBox(cx - w / 2.0, y_min, w, h, float(rng.uniform(0.5, 0.99)))
    return clamp_bbox(box, W, H) or box


def _detections(truth: BBox | None, n_decoys: int, rig: CameraRig, rng: np.random.Generator) -> list[BBox]:
    if truth is None:
        return []
    boxes = [truth]
    for i in range(n_decoys):
        boxes.append(_decoy(DECOY_KINDS[i % len(DECOY_KINDS)], truth, rig, rng))
    return boxes


def _dropout_frames(n_frames: int, fraction: float, seed: int) -> set[int]:
    n = int(round(fraction * n_frames))
    rng = np.random.default_rng([seed, _STREAM_DROPOUT])
    return set(rng.choice(n_frames, size=n, replace=False).tolist())


def generate_scene(spec: SceneSpec) -> SyntheticScene:
    """Render every frame of ``spec`` into an in-memory manifest."""
    rig = spec.rig
    rays = _rays(rig)
    static = _static_depth(spec, rays)
    truth_boxes = {t: analytic_box(spec, t) for t in range(spec.n_frames)}
    if all(b is None for b in truth_boxes.values()):
        raise DegenerateSpecError("the bar is not visible in any frame")
    dropped = _dropout_frames(spec.n_frames, spec.detection_dropout, spec.seed)

    static_disparity = _to_disparity(static, rig)
    frames = []
    for t in range(spec.n_frames):
        disparity = static_disparity.copy()
        image = np.full(disparity.shape, BACKGROUND_INTENSITY, dtype=np.float32)
        rendered = _render_bar(spec, t, rays, static)
        if rendered is not None:
            window, bar_depth, hit = rendered
            disparity[window] = _to_disparity(bar_depth, rig)
            image[window][hit] = BAR_INTENSITY
        disparity = _add_noise(disparity, spec.noise, _frame_rng(spec.seed, _STREAM_NOISE, t))
        disparity = _add_spurious(disparity, spec.spurious_fraction, spec, _frame_rng(spec.seed, _STREAM_SPURIOUS, t))
        dets = _detections(truth_boxes[t], spec.decoy_boxes, rig, _frame_rng(spec.seed, _STREAM_DECOYS, t))
        if t in dropped:
            dets = []
        frames.append(ManifestFrame(
            index=t, detections=dets, gt_box=truth_boxes[t],
            disparity=DisparityMap(disparity), image=image,
        ))
    truth = GroundTruth(
        boxes=truth_boxes,
        lower_edge_heights={t: spec.bar_height_m for t, b in truth_boxes.items() if b is not None},
        scene_height=spec.bar_height_m,
    )
    manifest = Manifest(rig, frames, ground_truth_height_m=spec.bar_height_m)
    return SyntheticScene(spec, manifest, truth)


def perturb(scene: SyntheticScene, kind: str, magnitude: float, seed: int | None = None) -> SyntheticScene:
    """Apply one reproducible perturbation; ground truth is left untouched.

    ``dropout`` withholds detections on ``round(magnitude * n)`` frames,
    ``decoys`` rebuilds every non-empty detection set with ``magnitude``
    decoys, ``noise`` adds Gaussian disparity noise of that std.
    """
    seed = scene.spec.seed if seed is None else seed
    frames = scene.manifest.frames
    rig = scene.manifest.rig
    if kind == "dropout":
        if not 0.0 <= magnitude <= 1.0:
            raise UsageError("dropout magnitude must lie in [0, 1]")
        dropped = _dropout_frames(len(frames), magnitude, seed + 1)
        new_frames = [replace(f, detections=[]) if t in dropped else f for t, f in enumerate(frames)]
    elif kind == "decoys":
        if magnitude < 0 or magnitude != int(magnitude):
            raise UsageError("decoy count must be a non-negative integer")
        new_frames = []
        for f in frames:
            if f.detections:
                truth = scene.truth.boxes[f.index]
                dets = _detections(truth, int(magnitude), rig, _frame_rng(seed + 1, _STREAM_DECOYS, f.index))
                f = replace(f, detections=dets)
            new_frames.append(f)
    elif kind == "noise":
        if magnitude < 0:
            raise UsageError("noise std must be >= 0")
        new_frames = []
        for f in frames:
            noisy = _add_noise(f.disparity.values, magnitude, _frame_rng(seed + 1, _STREAM_NOISE, f.index))
            new_frames.append(replace(f, disparity=DisparityMap(noisy)))
    else:
        raise UsageError(f"unknown perturbation kind {kind!r}; expected dropout, decoys or noise")
    manifest = replace(scene.manifest, frames=new_frames)
    return SyntheticScene(scene.spec, manifest, scene.truth)


def write_scene(scene: SyntheticScene, out_dir: str | Path) -> Path:
    """Write PFMs and ``manifest.json`` under ``out_dir``; return the manifest path."""
    out = Path(out_dir)
    (out / "disparity").mkdir(parents=True, exist_ok=True)
    (out / "image").mkdir(parents=True, exist_ok=True)
    frames = []
    for f in scene.manifest.frames:
        disp_rel = f"disparity/{f.index:06d}.pfm"
        img_rel = f"image/{f.index:06d}.pfm"
        write_pfm(out / disp_rel, f.disparity)
        write_image(out / img_rel, f.image)
        frames.append(ManifestFrame(f.index, disp_rel, img_rel, f.detections, f.gt_box))
    manifest = Manifest(scene.manifest.rig, frames, scene.manifest.ground_truth_height_m, base_dir=out)
    path = out / "manifest.json"
    write_manifest(path, manifest)
    return path


# --------------------------------------------------------------------------
# scene spec files
# --------------------------------------------------------------------------

def scene_spec_from_dict(doc: dict) -> SceneSpec:
    """Build a spec from JSON; ``depth_trajectory`` may be a list or
    ``{"start": .., "stop": .., "frames": ..}`` for an evenly spaced run."""
    if not isinstance(doc, dict):
        raise ConfigurationError("scene spec must be a JSON object")
    data = dict(doc)
    if "camera" in data:
        data["rig"] = rig_from_json(data.pop("camera"))
    traj = data.get("depth_trajectory")
    if isinstance(traj, dict):
        try:
            data["depth_trajectory"] = tuple(np.linspace(traj["start"], traj["stop"], int(traj["frames"])).tolist())
        except KeyError as exc:
            raise ConfigurationError(f"depth_trajectory range lacks {exc.args[0]!r}") from None
    known = {f.name for f in dataclasses.fields(SceneSpec)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"unknown scene spec fields: {', '.join(unknown)}")
    return SceneSpec(**data)


def lateral_track(spec: SceneSpec, px_per_frame: float, depth: float | None = None) -> tuple[float, ...]:
    """Per-frame bar centres that move ``px_per_frame`` pixels at the given depth."""
    z = spec.depth_trajectory[0] if depth is None else depth
    x0 = spec.x_center(0)
    step = px_per_frame * z / spec.rig.fx
    return tuple(x0 + step * t for t in range(spec.n_frames))


def constant_depth(z: float, n: int) -> Sequence[float]:
    return (float(z),) * n
