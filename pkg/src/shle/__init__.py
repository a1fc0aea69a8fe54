"""Stereo height-limit estimation.

Stage 1 picks one overhead-device box per frame and fills frames between
detections; stage 2 lifts the box to 3D, filters it in depth and time and
reports the clearance height.
"""

__version__ = "0.1.0"

from .config import PipelineConfig
from .detection import BBox, DetectionSet, extend_bbox, filter_candidates
from .geometry import (
    CameraRig,
    DepthMap,
    DevicePointCloud,
    DisparityMap,
    WorldPoint,
    apply_mount_height,
    camera_to_world,
    disparity_to_depth,
    extract_frustum_points,
    pixel_to_camera,
    project_world_to_pixel,
)
from .metrics import BoxMetrics, HeightMetrics, aggregate, box_metrics, height_metrics
from .pipeline import SceneEstimate, run_corpus, run_scene
from .spatial_filter import depth_filter, kde_density, kde_mode
from .temporal_filter import HeightSeries, KalmanParams, average_lowest, kalman_smooth, scene_height
from .tracking import fill_gaps, linear_interpolation_tracker, ncc_template_tracker

__all__ = [
    "BBox", "BoxMetrics", "CameraRig", "DepthMap", "DetectionSet", "DevicePointCloud",
    "DisparityMap", "HeightMetrics", "HeightSeries", "KalmanParams", "PipelineConfig",
    "SceneEstimate", "WorldPoint", "aggregate", "apply_mount_height", "average_lowest",
    "box_metrics", "camera_to_world", "depth_filter", "disparity_to_depth", "extend_bbox",
    "extract_frustum_points", "fill_gaps", "filter_candidates", "height_metrics",
    "kalman_smooth", "kde_density", "kde_mode", "linear_interpolation_tracker",
    "ncc_template_tracker", "pixel_to_camera", "project_world_to_pixel", "run_corpus",
    "run_scene", "scene_height",
]
