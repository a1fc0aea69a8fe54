"""On-disk formats.

* disparity maps and intensity images: single-channel PFM (``Pf``)
* detections: JSON ``{"frames": [{"index": i, "boxes": [{x, y, w, h, score}]}]}``
* sequence manifest: JSON with a ``camera`` block and a ``frames`` list
* results: CSV with a fixed header and a ``scene_height_m`` footer row
* metrics: JSON mirroring :class:`BoxMetrics` / :class:`HeightMetrics`

Every writer is the exact inverse of its reader: reading a file this module
wrote and writing it back reproduces the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .detection import BBox, DetectionSet
from .errors import ConfigurationError, FormatError, ValidationError
from .geometry import CameraRig, DisparityMap
from .metrics import BoxMetrics, HeightMetrics

# --------------------------------------------------------------------------
# PFM
# --------------------------------------------------------------------------

_PFM_DIMS = re.compile(rb"(\d+) (\d+)")


def _read_line(data: bytes, start: int, what: str) -> tuple[bytes, int]:
    end = data.find(b"\n", start)
    if end < 0:
        raise FormatError(f"PFM header: missing newline after {what}", offset=start)
    return data[start:end], end + 1


def decode_pfm(data: bytes) -> tuple[np.ndarray, float]:
    """Parse PFM bytes into a top-row-first float32 array and the header scale."""
    magic, pos = _read_line(data, 0, "magic")
    if magic != b"Pf":
        raise FormatError(f"PFM header: expected magic 'Pf' (single channel), got {magic[:8]!r}", offset=0)

    dims_at = pos
    dims, pos = _read_line(data, pos, "dimensions")
    match = _PFM_DIMS.fullmatch(dims)
    if match is None:
        raise FormatError(f"PFM header: bad dimensions line {dims[:32]!r}", offset=dims_at)
    width, height = int(match.group(1)), int(match.group(2))
    if width == 0 or height == 0:
        raise FormatError("PFM header: zero width or height", offset=dims_at)

    scale_at = pos
    scale_text, pos = _read_line(data, pos, "scale")
    try:
        scale = float(scale_text.decode("ascii"))
    except (UnicodeDecodeError, ValueError):
        raise FormatError(f"PFM header: bad scale {scale_text[:32]!r}", offset=scale_at) from None
    if scale == 0 or not np.isfinite(scale):
        raise FormatError("PFM header: scale must be finite and non-zero", offset=scale_at)

    expected = width * height * 4
    payload = data[pos:]
    if len(payload) < expected:
        raise FormatError(
            f"PFM payload truncated: need {expected} bytes, found {len(payload)}", offset=pos + len(payload)
        )
    if len(payload) > expected:
        raise FormatError(f"PFM payload has {len(payload) - expected} trailing bytes", offset=pos + expected)
    dtype = "<f4" if scale < 0 else ">f4"
    rows = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    # stored bottom row first
    return np.flipud(rows).astype(np.float32), scale


def encode_pfm(values: np.ndarray, scale: float = -1.0) -> bytes:
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise FormatError(f"PFM holds 2-D maps only, got shape {arr.shape}")
    if scale == 0:
        raise FormatError("PFM scale must be non-zero")
    height, width = arr.shape
    dtype = "<f4" if scale < 0 else ">f4"
    header = f"Pf\n{width} {height}\n{scale!r}\n".encode("ascii")
    return header + np.ascontiguousarray(np.flipud(arr)).astype(dtype).tobytes()


def read_pfm(path: str | Path) -> DisparityMap:
    values, _ = decode_pfm(Path(path).read_bytes())
    return DisparityMap(values)


def write_pfm(path: str | Path, dmap: DisparityMap | np.ndarray, scale: float = -1.0) -> None:
    values = dmap.values if isinstance(dmap, DisparityMap) else dmap
    Path(path).write_bytes(encode_pfm(values, scale))


def read_image(path: str | Path) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes())[0]


def write_image(path: str | Path, image: np.ndarray) -> None:
    Path(path).write_bytes(encode_pfm(image))


# --------------------------------------------------------------------------
# Detections
# --------------------------------------------------------------------------

def _box_to_json(box: BBox) -> dict:
    return {"x": box.x_min, "y": box.y_min, "w": box.w, "h": box.h, "score": box.score}


def _box_from_json(raw, where: str) -> BBox:
    if not isinstance(raw, dict):
        raise ValidationError(f"{where}: box must be an object")
    missing = [k for k in ("x", "y", "w", "h") if k not in raw]
    if missing:
        raise ValidationError(f"{where}: box lacks fields {', '.join(missing)}")
    values = {k: raw[k] for k in ("x", "y", "w", "h")}
    values["score"] = raw.get("score", 1.0)
    for key, value in values.items():
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ValidationError(f"{where}: box field {key!r} must be a number")
    if values["w"] <= 0 or values["h"] <= 0:
        raise ValidationError(f"{where}: box w/h must be > 0 (got w={values['w']}, h={values['h']})")
    if not 0.0 <= values["score"] <= 1.0:
        raise ValidationError(f"{where}: score {values['score']} outside [0, 1]")
    return BBox(values["x"], values["y"], values["w"], values["h"], values["score"])


def _boxes_from_json(raw, where: str) -> list[BBox]:
    if not isinstance(raw, list):
        raise ValidationError(f"{where}: 'boxes' must be a list")
    return [_box_from_json(b, where) for b in raw]


def _check_increasing(indices: list[int], what: str) -> None:
    for a, b in zip(indices, indices[1:]):
        if b <= a:
            raise ValidationError(f"{what}: frame indices must be strictly increasing ({a} then {b})")


def parse_detections(doc) -> list[DetectionSet]:
    if not isinstance(doc, dict) or not isinstance(doc.get("frames"), list):
        raise ValidationError("detections document needs a 'frames' list")
    sets = []
    for pos, frame in enumerate(doc["frames"]):
        if not isinstance(frame, dict) or isinstance(frame.get("index"), bool) or not isinstance(frame.get("index"), int):
            raise ValidationError(f"detections entry #{pos} needs an integer 'index'")
        index = frame["index"]
        sets.append(DetectionSet(index, _boxes_from_json(frame.get("boxes", []), f"frame {index}")))
    _check_increasing([s.frame_index for s in sets], "detections")
    return sets


def dump_detections(sets: list[DetectionSet]) -> str:
    doc = {"frames": [{"index": s.frame_index, "boxes": [_box_to_json(b) for b in s.boxes]} for s in sets]}
    return json.dumps(doc, indent=2) + "\n"


def read_detections(path: str | Path) -> list[DetectionSet]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc.msg}", offset=exc.pos) from None
    return parse_detections(doc)


def write_detections(path: str | Path, sets: list[DetectionSet]) -> None:
    Path(path).write_text(dump_detections(sets))


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------

CAMERA_FIELDS = ("fx", "fy", "cx", "cy", "width", "height", "baseline_m", "mount_height_m")


@dataclass
class ManifestFrame:
    """One frame of a sequence.

    ``disparity`` / ``image`` hold in-memory data (synthetic scenes); otherwise
    they are read from the paths on demand.  ``detections`` are the inline
    boxes, ``None`` when the manifest lists none for the frame.
    """

    index: int
    disparity_path: str | None = None
    image_path: str | None = None
    detections: list[BBox] | None = None
    gt_box: BBox | None = None
    disparity: DisparityMap | None = field(default=None, repr=False)
    image: np.ndarray | None = field(default=None, repr=False)


@dataclass
class Manifest:
    rig: CameraRig
    frames: list[ManifestFrame]
    ground_truth_height_m: float | None = None
    detections_path: str | None = None
    base_dir: Path = field(default_factory=Path)
    external_detections: dict[int, list[BBox]] | None = field(default=None, repr=False)

    def resolve(self, relative: str) -> Path:
        return self.base_dir / relative

    def load_disparity(self, frame: ManifestFrame) -> DisparityMap:
        if frame.disparity is not None:
            return frame.disparity
        if frame.disparity_path is None:
            raise ConfigurationError(f"frame {frame.index} has neither disparity data nor a path")
        return read_pfm(self.resolve(frame.disparity_path))

    def load_image(self, frame: ManifestFrame) -> np.ndarray | None:
        if frame.image is not None:
            return frame.image
        if frame.image_path is None:
            return None
        return read_image(self.resolve(frame.image_path))

    def detections_for(self, frame: ManifestFrame) -> list[BBox]:
        """External detections win over inline ones for the same frame."""
        if self.external_detections is not None and frame.index in self.external_detections:
            return self.external_detections[frame.index]
        return list(frame.detections or [])

    def gt_boxes(self) -> dict[int, BBox]:
        return {f.index: f.gt_box for f in self.frames if f.gt_box is not None}


def _rig_from_json(raw) -> CameraRig:
    if not isinstance(raw, dict):
        raise ConfigurationError("manifest needs a 'camera' object")
    missing = [name for name in CAMERA_FIELDS if name not in raw]
    if missing:
        raise ConfigurationError(f"camera block is missing fields: {', '.join(missing)}")
    kwargs = {name: raw[name] for name in CAMERA_FIELDS}
    for name in ("width", "height"):
        if not isinstance(kwargs[name], int) or isinstance(kwargs[name], bool):
            raise ConfigurationError(f"camera field {name!r} must be an integer")
    if "rotation" in raw:
        rot = raw["rotation"]
        if not isinstance(rot, list) or len(rot) != 9:
            raise ConfigurationError("camera field 'rotation' must hold 9 numbers (row-major)")
        kwargs["rotation"] = np.array(rot, dtype=np.float64).reshape(3, 3)
    if "translation" in raw:
        tr = raw["translation"]
        if not isinstance(tr, list) or len(tr) != 3:
            raise ConfigurationError("camera field 'translation' must hold 3 numbers")
        kwargs["translation"] = np.array(tr, dtype=np.float64)
    return CameraRig(**kwargs)


def rig_to_json(rig: CameraRig) -> dict:
    return {
        "fx": rig.fx,
        "fy": rig.fy,
        "cx": rig.cx,
        "cy": rig.cy,
        "width": rig.width,
        "height": rig.height,
        "baseline_m": rig.baseline_m,
        "mount_height_m": rig.mount_height_m,
        "rotation": [float(v) for v in rig.rotation.reshape(-1)],
        "translation": [float(v) for v in rig.translation],
    }


def rig_from_json(raw) -> CameraRig:
    return _rig_from_json(raw)


def parse_manifest(doc, base_dir: Path, check_files: bool = True) -> Manifest:
    if not isinstance(doc, dict):
        raise ConfigurationError("manifest must be a JSON object")
    rig = _rig_from_json(doc.get("camera"))
    raw_frames = doc.get("frames")
    if not isinstance(raw_frames, list):
        raise ConfigurationError("manifest needs a 'frames' list")

    frames = []
    for pos, raw in enumerate(raw_frames):
        if not isinstance(raw, dict) or isinstance(raw.get("index"), bool) or not isinstance(raw.get("index"), int):
            raise ConfigurationError(f"manifest frame #{pos} needs an integer 'index'")
        index = raw["index"]
        if not isinstance(raw.get("disparity_path"), str):
            raise ConfigurationError(f"manifest frame {index} needs a 'disparity_path'")
        detections = None
        if "detections" in raw:
            detections = _boxes_from_json(raw["detections"], f"frame {index}")
        gt_box = _box_from_json(raw["gt_box"], f"frame {index} gt_box") if "gt_box" in raw else None
        frames.append(ManifestFrame(index, raw["disparity_path"], raw.get("image_path"), detections, gt_box))
    _check_increasing([f.index for f in frames], "manifest")

    gt = doc.get("ground_truth_height_m")
    if gt is not None and (isinstance(gt, bool) or not isinstance(gt, (int, float))):
        raise ConfigurationError("'ground_truth_height_m' must be a number")
    manifest = Manifest(rig, frames, gt, doc.get("detections_path"), base_dir)

    if check_files:
        for frame in frames:
            for rel in (frame.disparity_path, frame.image_path):
                if rel is not None and not manifest.resolve(rel).is_file():
                    raise ConfigurationError(f"frame {frame.index}: referenced file {rel} does not exist")
    if manifest.detections_path is not None:
        det_file = manifest.resolve(manifest.detections_path)
        if not det_file.is_file():
            raise ConfigurationError(f"detections file {manifest.detections_path} does not exist")
        manifest.external_detections = {s.frame_index: s.boxes for s in read_detections(det_file)}
    return manifest


def read_manifest(path: str | Path, check_files: bool = True) -> Manifest:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"manifest {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: invalid JSON: {exc.msg}", offset=exc.pos) from None
    return parse_manifest(doc, path.parent, check_files)


def dump_manifest(manifest: Manifest) -> str:
    doc: dict = {"camera": rig_to_json(manifest.rig)}
    if manifest.ground_truth_height_m is not None:
        doc["ground_truth_height_m"] = manifest.ground_truth_height_m
    if manifest.detections_path is not None:
        doc["detections_path"] = manifest.detections_path
    frames = []
    for frame in manifest.frames:
        if frame.disparity_path is None:
            raise ConfigurationError(f"frame {frame.index} has no disparity_path to record")
        entry: dict = {"index": frame.index, "disparity_path": frame.disparity_path}
        if frame.image_path is not None:
            entry["image_path"] = frame.image_path
        if frame.detections is not None:
            entry["detections"] = [_box_to_json(b) for b in frame.detections]
        if frame.gt_box is not None:
            entry["gt_box"] = _box_to_json(frame.gt_box)
        frames.append(entry)
    doc["frames"] = frames
    return json.dumps(doc, indent=2) + "\n"


def write_manifest(path: str | Path, manifest: Manifest) -> None:
    Path(path).write_text(dump_manifest(manifest))


# --------------------------------------------------------------------------
# Results table
# --------------------------------------------------------------------------

RESULTS_HEADER = ("frame_index", "h_df", "h_tf", "box_x", "box_y", "box_w", "box_h", "n_points")
FOOTER_KEY = "scene_height_m"


@dataclass(frozen=True)
class ResultRow:
    frame_index: int
    h_df: float
    h_tf: float
    box_x: float
    box_y: float
    box_w: float
    box_h: float
    n_points: int

    @property
    def box(self) -> BBox:
        return BBox(self.box_x, self.box_y, self.box_w, self.box_h)


@dataclass
class ResultsTable:
    rows: list[ResultRow]
    scene_height_m: float


def dump_results(table: ResultsTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(RESULTS_HEADER)
    for row in table.rows:
        writer.writerow([
            row.frame_index, repr(float(row.h_df)), repr(float(row.h_tf)),
            repr(float(row.box_x)), repr(float(row.box_y)), repr(float(row.box_w)), repr(float(row.box_h)),
            row.n_points,
        ])
    writer.writerow([FOOTER_KEY, repr(float(table.scene_height_m))])
    return buf.getvalue()


def parse_results(text: str, source: str = "results") -> ResultsTable:
    lines = list(csv.reader(io.StringIO(text)))
    if not lines or tuple(lines[0]) != RESULTS_HEADER:
        raise FormatError(f"{source}: first row must be the header {','.join(RESULTS_HEADER)}")
    if len(lines) < 2 or len(lines[-1]) != 2 or lines[-1][0] != FOOTER_KEY:
        raise FormatError(f"{source}: last row must be '{FOOTER_KEY},<value>'")
    rows = []
    for lineno, cells in enumerate(lines[1:-1], start=2):
        if len(cells) != len(RESULTS_HEADER):
            raise FormatError(f"{source}: line {lineno} has {len(cells)} fields, expected {len(RESULTS_HEADER)}")
        try:
            rows.append(ResultRow(
                int(cells[0]), float(cells[1]), float(cells[2]),
                float(cells[3]), float(cells[4]), float(cells[5]), float(cells[6]),
                int(cells[7]),
            ))
        except ValueError as exc:
            raise FormatError(f"{source}: line {lineno}: {exc}") from None
    try:
        scene = float(lines[-1][1])
    except ValueError:
        raise FormatError(f"{source}: bad scene height {lines[-1][1]!r}") from None
    _check_increasing([r.frame_index for r in rows], source)
    return ResultsTable(rows, scene)


def read_results(path: str | Path) -> ResultsTable:
    return parse_results(Path(path).read_text(), str(path))


def write_results(path: str | Path, table: ResultsTable) -> None:
    Path(path).write_text(dump_results(table))


# --------------------------------------------------------------------------
# Metrics
# --------------------------------------------------------------------------

def dump_metrics(height: HeightMetrics | None = None, box: BoxMetrics | None = None, **extra) -> str:
    doc: dict = {}
    if height is not None:
        doc["height"] = asdict(height)
    if box is not None:
        doc["box"] = asdict(box)
    doc.update(extra)
    return json.dumps(doc, indent=2) + "\n"


def write_metrics(path: str | Path, height: HeightMetrics | None = None, box: BoxMetrics | None = None, **extra) -> None:
    Path(path).write_text(dump_metrics(height, box, **extra))


def read_metrics(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text())
    out = dict(doc)
    if "height" in doc:
        out["height"] = HeightMetrics(**doc["height"])
    if "box" in doc:
        out["box"] = BoxMetrics(**doc["box"])
    return out
