"""End-to-end scene processing.

Stage 1 picks one box per frame with the filter rule and fills the frames
between anchors with a tracker.  Stage 2 turns each boxed region into a
height: depth from disparity, pixel extension, frustum lifting, KDE-centred
depth filtering and the lowest-N average.  A Kalman pass over the per-frame
heights and their mean give the scene height.

A frame that fails anywhere in stage 2 is skipped with a reason code; only a
scene with no estimate at all raises.
"""

from __future__ import annotations

import logging
import os
from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig
from .detection import BBox, clamp_bbox, extend_bbox, filter_candidates
from .errors import NoSceneEstimateError, ShleError, TrackerUnavailableError
from .geometry import DisparityMap, disparity_to_depth, extract_frustum_points
from .io_formats import Manifest, ManifestFrame, ResultRow, ResultsTable, read_manifest
from .metrics import BoxMetrics, CorpusSummary, HeightMetrics, aggregate, box_metrics, height_metrics
from .spatial_filter import depth_filter, kde_mode
from .temporal_filter import HeightSeries, KalmanParams, average_lowest, build_series
from .tracking import (
    TrackFrame,
    TrackedSequence,
    fill_gaps,
    linear_interpolation_tracker,
    ncc_template_tracker,
)

log = logging.getLogger(__name__)

DepthCenter = Callable[[np.ndarray, float], float]


@dataclass
class FrameEstimate:
    frame_index: int
    h_df: float
    n_points: int


@dataclass
class SceneEstimate:
    series: HeightSeries
    boxes: dict[int, BBox]
    n_points: dict[int, int]
    skipped: dict[int, str]
    anchors: frozenset[int] = frozenset()
    notes: list[str] = field(default_factory=list)

    @property
    def scene_height(self) -> float:
        return self.series.scene_height

    def to_results_table(self) -> ResultsTable:
        filtered = dict(self.series.filtered)
        rows = []
        for idx, h_df in self.series.frames:
            box = self.boxes[idx]
            rows.append(ResultRow(idx, h_df, filtered[idx], box.x_min, box.y_min, box.w, box.h, self.n_points[idx]))
        return ResultsTable(rows, self.scene_height)


def thread_count(requested: int | None = None) -> int:
    """Worker count: explicit request, else ``SHLE_THREADS``, else all cores."""
    if requested is not None:
        return max(1, int(requested))
    env = os.environ.get("SHLE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring non-integer SHLE_THREADS=%r", env)
    return os.cpu_count() or 1


def select_anchors(manifest: Manifest, config: PipelineConfig) -> dict[int, BBox]:
    rig = manifest.rig
    anchors = {}
    for frame in manifest.frames:
        boxes = [clamp_bbox(b, rig.width, rig.height) for b in manifest.detections_for(frame)]
        chosen = filter_candidates([b for b in boxes if b is not None], rig.width, rig.height, config)
        if chosen is not None:
            anchors[frame.index] = chosen
    return anchors


class _LazyTrackFrames(Mapping):
    """Frame index -> :class:`TrackFrame`, reading intensity images on access."""

    def __init__(self, manifest: Manifest, with_images: bool):
        self._manifest = manifest
        self._frames = {f.index: f for f in manifest.frames}
        self._with_images = with_images

    def __getitem__(self, index: int) -> TrackFrame:
        frame = self._frames[index]
        image = self._manifest.load_image(frame) if self._with_images else None
        return TrackFrame(index, self._manifest.rig.width, self._manifest.rig.height, image)

    def __iter__(self):
        return iter(self._frames)

    def __len__(self):
        return len(self._frames)


def track(manifest: Manifest, anchors: dict[int, BBox], config: PipelineConfig, notes: list[str]) -> TrackedSequence:
    if config.tracker == "ncc":
        tracker = ncc_template_tracker(config.ncc_search_radius, config.ncc_threshold, config.ncc_context)
        try:
            return fill_gaps(anchors, _LazyTrackFrames(manifest, True), tracker)
        except TrackerUnavailableError as exc:
            notes.append(f"ncc tracker unavailable ({exc}); fell back to interpolation")
            log.warning("ncc tracker unavailable (%s); using interpolation", exc)
    return fill_gaps(anchors, _LazyTrackFrames(manifest, False), linear_interpolation_tracker())


def estimate_frame(
    box: BBox,
    disparity: DisparityMap,
    manifest: Manifest,
    frame_index: int,
    config: PipelineConfig,
    depth_center: DepthCenter | None = None,
    use_depth_filter: bool = True,
) -> FrameEstimate:
    """Stage 2 for one frame.  Raises a :class:`ShleError` subclass on failure."""
    rig = manifest.rig
    depth = disparity_to_depth(disparity, rig)
    extended = extend_bbox(box, config.M, rig.height)
    cloud = extract_frustum_points(extended, depth, rig, frame_index)
    if use_depth_filter:
        center = (depth_center or kde_mode)(cloud.z_cam, config.kde_bandwidth)
        cloud = depth_filter(cloud, center, config.sigma)
    return FrameEstimate(frame_index, average_lowest(cloud, config.n_lowest), len(cloud))


def run_scene(
    manifest: Manifest | str | Path,
    config: PipelineConfig | None = None,
    *,
    threads: int | None = None,
    depth_center: DepthCenter | None = None,
    use_depth_filter: bool = True,
) -> SceneEstimate:
    """Estimate per-frame and scene clearance heights for one sequence.

    ``depth_center`` and ``use_depth_filter`` exist for ablations: the first
    replaces the KDE mode as interval centre, the second skips the depth
    filter entirely.
    """
    if not isinstance(manifest, Manifest):
        manifest = read_manifest(manifest)
    config = config or PipelineConfig()
    notes: list[str] = []
    skipped: dict[int, str] = {}

    anchors = select_anchors(manifest, config)
    if not anchors:
        raise NoSceneEstimateError("no frame has a detection that survives the filter rule")
    tracked = track(manifest, anchors, config, notes)
    for frame in manifest.frames:
        if frame.index not in tracked:
            skipped[frame.index] = "no_box"

    frames_by_index = {f.index: f for f in manifest.frames}

    def work(index: int) -> FrameEstimate | ShleError:
        frame: ManifestFrame = frames_by_index[index]
        try:
            disparity = manifest.load_disparity(frame)
            return estimate_frame(
                tracked[index], disparity, manifest, index, config, depth_center, use_depth_filter
            )
        except ShleError as exc:
            return exc

    indices = [f.index for f in manifest.frames if f.index in tracked]
    workers = thread_count(threads)
    if workers == 1:
        outcomes = [work(i) for i in indices]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(work, indices))

    raw = []
    n_points = {}
    for index, outcome in zip(indices, outcomes):
        if isinstance(outcome, ShleError):
            skipped[index] = outcome.code
            log.debug("frame %d skipped: %s", index, outcome)
        else:
            raw.append((index, outcome.h_df))
            n_points[index] = outcome.n_points
    if not raw:
        raise NoSceneEstimateError(
            f"all {len(manifest.frames)} frames were skipped ({', '.join(sorted(set(skipped.values())))})"
        )

    params = KalmanParams(config.kalman_q, config.kalman_r, config.kalman_p0)
    series = build_series(raw, params)
    boxes = {i: tracked[i] for i, _ in raw}
    return SceneEstimate(series, boxes, n_points, dict(sorted(skipped.items())), tracked.anchors, notes)


# --------------------------------------------------------------------------
# scoring
# --------------------------------------------------------------------------

def scene_box_metrics(boxes: Mapping[int, BBox], gt_boxes: Mapping[int, BBox]) -> BoxMetrics | None:
    """Mean box metrics over frames that have both a prediction and a truth."""
    per_frame = [box_metrics(boxes[i], gt_boxes[i]) for i in sorted(boxes) if i in gt_boxes]
    if not per_frame:
        return None
    summary = aggregate(per_frame)
    return BoxMetrics(summary.mean_cpd, summary.mean_rcpda, summary.mean_rcpdh)


@dataclass
class SceneReport:
    name: str
    estimate: SceneEstimate | None
    height: HeightMetrics | None = None
    box: BoxMetrics | None = None
    error: str | None = None

    @property
    def scene_height(self) -> float | None:
        return self.estimate.scene_height if self.estimate is not None else None


@dataclass
class CorpusReport:
    scenes: list[SceneReport]
    summary: CorpusSummary | None


def run_corpus(
    manifests: list[Manifest | str | Path],
    config: PipelineConfig | None = None,
    *,
    names: list[str] | None = None,
    threads: int | None = None,
) -> CorpusReport:
    """Run every scene and average metrics over scenes with ground truth.

    A failing scene is reported with its error and left out of the averages.
    """
    config = config or PipelineConfig()
    reports = []
    for pos, item in enumerate(manifests):
        name = names[pos] if names is not None else (str(item) if not isinstance(item, Manifest) else f"scene{pos}")
        try:
            manifest = item if isinstance(item, Manifest) else read_manifest(item)
            estimate = run_scene(manifest, config, threads=threads)
        except ShleError as exc:
            reports.append(SceneReport(name, None, error=f"{exc.code}: {exc}"))
            continue
        report = SceneReport(name, estimate)
        if manifest.ground_truth_height_m is not None:
            report.height = height_metrics(estimate.scene_height, manifest.ground_truth_height_m)
        report.box = scene_box_metrics(estimate.boxes, manifest.gt_boxes())
        reports.append(report)

    metrics: list[HeightMetrics | BoxMetrics] = [r.height for r in reports if r.height is not None]
    metrics += [r.box for r in reports if r.box is not None]
    summary = aggregate(metrics) if metrics else None
    return CorpusReport(reports, summary)
