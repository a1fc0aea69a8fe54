"""Filling the frames between anchor detections.

A detector rarely fires on every frame.  Anchors are the frames whose box
came from :func:`shle.detection.filter_candidates`; :func:`fill_gaps` runs a
tracker from each anchor to the next and yields one box per frame over the
anchored range.  Frames outside the first/last anchor get no box.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .detection import BBox, clamp_bbox
from .errors import NoDeviceError, TrackerUnavailableError


@dataclass
class TrackFrame:
    """What a tracker may look at: frame index, image size, optional intensity."""

    index: int
    width: int
    height: int
    image: np.ndarray | None = None


@dataclass
class TrackedSequence:
    entries: dict[int, BBox]
    anchors: frozenset[int]

    @property
    def first(self) -> int:
        return min(self.entries)

    @property
    def last(self) -> int:
        return max(self.entries)

    def __getitem__(self, frame_index: int) -> BBox:
        return self.entries[frame_index]

    def __contains__(self, frame_index: int) -> bool:
        return frame_index in self.entries

    def __len__(self) -> int:
        return len(self.entries)


class Tracker(abc.ABC):
    """Single-object tracker.

    ``init`` receives the start frame and box; ``end`` optionally carries the
    next anchor ``(frame, box)`` for trackers that interpolate toward it.
    """

    @abc.abstractmethod
    def init(self, frame: TrackFrame, box: BBox, end: tuple[TrackFrame, BBox] | None = None) -> None:
        ...

    @abc.abstractmethod
    def step(self, frame: TrackFrame) -> BBox:
        ...


class LinearInterpolationTracker(Tracker):
    """Interpolates ``(x_min, y_min, w, h)`` linearly between two anchors."""

    def init(self, frame, box, end=None):
        self._start = (frame.index, box)
        self._end = (end[0].index, end[1]) if end is not None else None

    def step(self, frame):
        k0, b0 = self._start
        if self._end is None:
            return b0
        k1, b1 = self._end
        t = (frame.index - k0) / (k1 - k0)
        if t == 0:
            return b0
        if t == 1:
            return b1
        coords = [a + t * (b - a) for a, b in zip(b0.as_tuple(), b1.as_tuple())]
        score = min(b0.score, b1.score)
        return BBox(*coords, score=score)


def ncc_scores(image: np.ndarray, template: np.ndarray, top: int, left: int, radius: int) -> np.ndarray:
    """Normalised cross-correlation of ``template`` against every offset.

    Returns a ``(2r+1, 2r+1)`` array indexed ``[dy + r, dx + r]``; offsets
    whose window leaves the image, or with zero variance, score ``-inf``.
    """
    th, tw = template.shape
    side = 2 * radius + 1
    scores = np.full((side, side), -np.inf)
    t = template - template.mean()
    t_norm = np.sqrt(np.sum(t * t))
    if t_norm == 0:
        return scores

    y0, x0 = max(top - radius, 0), max(left - radius, 0)
    y1 = min(top + radius + th, image.shape[0])
    x1 = min(left + radius + tw, image.shape[1])
    region = image[y0:y1, x0:x1]
    if region.shape[0] < th or region.shape[1] < tw:
        return scores
    windows = np.lib.stride_tricks.sliding_window_view(region, (th, tw))
    # windows[i, j] starts at (y0 + i, x0 + j)
    n = th * tw
    w_sum = windows.sum(axis=(2, 3))
    w_sq = np.einsum("ijkl,ijkl->ij", windows, windows)
    cross = np.einsum("ijkl,kl->ij", windows, t)
    var = w_sq - w_sum * w_sum / n
    with np.errstate(invalid="ignore", divide="ignore"):
        ncc = np.where(var > 1e-12 * n, cross / (np.sqrt(np.maximum(var, 0.0)) * t_norm), -np.inf)

    oy, ox = y0 - (top - radius), x0 - (left - radius)
    scores[oy:oy + ncc.shape[0], ox:ox + ncc.shape[1]] = ncc
    return scores


class NccTemplateTracker(Tracker):
    """Exhaustive normalised cross-correlation template matcher.

    The template is the previous box plus ``context`` pixels on every side.
    A uniform bar crop alone has no variance to correlate; the margin brings
    its edges into the template.  The template is refreshed every step, and
    the box stays put when the best correlation is below ``threshold``.
    """

    def __init__(self, search_radius: int = 8, threshold: float = 0.5, context: int = 8):
        self.search_radius = search_radius
        self.threshold = threshold
        self.context = context

    def _crop_bounds(self, box: BBox, frame: TrackFrame) -> tuple[int, int, int, int]:
        cols, rows = box.pixel_ranges()
        top = max(rows.start - self.context, 0)
        left = max(cols.start - self.context, 0)
        bottom = min(rows.stop + self.context, frame.height)
        right = min(cols.stop + self.context, frame.width)
        return top, left, bottom, right

    def _take_template(self, frame: TrackFrame, box: BBox) -> None:
        top, left, bottom, right = self._crop_bounds(box, frame)
        self._template = np.asarray(frame.image, dtype=np.float64)[top:bottom, left:right]
        self._origin = (top, left)
        self._box = box

    def init(self, frame, box, end=None):
        if frame.image is None:
            raise TrackerUnavailableError(f"frame {frame.index} carries no intensity image")
        self._take_template(frame, box)

    def step(self, frame):
        if frame.image is None:
            raise TrackerUnavailableError(f"frame {frame.index} carries no intensity image")
        image = np.asarray(frame.image, dtype=np.float64)
        top, left = self._origin
        r = self.search_radius
        if self._template.size == 0:
            return self._box
        scores = ncc_scores(image, self._template, top, left, r)
        best = scores.max()
        if not np.isfinite(best) or best < self.threshold:
            return self._box
        # zero offset wins ties, otherwise the first maximum in row-major order
        flat_best = np.flatnonzero(scores >= best)
        centre = r * (2 * r + 1) + r
        idx = centre if centre in flat_best else int(flat_best[0])
        dy, dx = divmod(idx, 2 * r + 1)
        dy -= r
        dx -= r
        moved = replace(self._box, x_min=self._box.x_min + dx, y_min=self._box.y_min + dy)
        moved = clamp_bbox(moved, frame.width, frame.height) or self._box
        self._take_template(frame, moved)
        return moved


def linear_interpolation_tracker() -> LinearInterpolationTracker:
    return LinearInterpolationTracker()


def ncc_template_tracker(search_radius: int = 8, threshold: float = 0.5, context: int = 8) -> NccTemplateTracker:
    return NccTemplateTracker(search_radius, threshold, context)


def fill_gaps(
    anchors: Mapping[int, BBox],
    frames: Sequence[TrackFrame] | Mapping[int, TrackFrame],
    tracker: Tracker,
) -> TrackedSequence:
    """Produce one box per frame from the first anchor to the last.

    The tracker is (re)initialised at every anchor and stepped through the
    frames up to the next one.  Anchor frames keep their detection unchanged.
    """
    if not anchors:
        raise NoDeviceError("no anchor detection in the scene")
    by_index = frames if isinstance(frames, Mapping) else {f.index: f for f in frames}
    keys = sorted(anchors)
    missing = [k for k in keys if k not in by_index]
    if missing:
        raise NoDeviceError(f"anchor frames {missing} are not part of the sequence")
    order = sorted(by_index)

    entries: dict[int, BBox] = {keys[0]: anchors[keys[0]]}
    for k0, k1 in zip(keys, keys[1:]):
        between = [i for i in order if k0 < i < k1]
        if between:
            tracker.init(by_index[k0], anchors[k0], (by_index[k1], anchors[k1]))
            for i in between:
                entries[i] = tracker.step(by_index[i])
        entries[k1] = anchors[k1]
    return TrackedSequence(dict(sorted(entries.items())), frozenset(keys))
