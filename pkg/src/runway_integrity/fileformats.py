"""Versioned JSON prediction/heatmap files and deterministic serialization.

Prediction file (``version: "pose-integrity/1"``)::

    {
      "version": "pose-integrity/1",
      "camera": {"fx": .., "fy": .., "cx": .., "cy": .., "width": .., "height": ..},
      "world_points": [[x, y, z], ...],            # meters, runway frame
      "init": {"glide_deg": 3, "distance_m": 2000, "lateral_offset_m": 0},  # optional
      "frames": [
        {
          "id": "optional label",
          "keypoints": [{"mu_px": [u, v], "sigma_px": [sx, sy]}, ...],
          "truth_px": [[u, v], ...],                 # optional
          "true_pose": {"position": [..], "rotation": [[..], [..], [..]]},  # optional
          "heatmaps": [{"shape": [H, W], "values": [...]}, ...]             # optional
        }
      ]
    }

Heatmap file: ``{"version": ..., "crop_size": [w, h], "heatmaps": [{"shape": [H, W],
"values": [... row-major ...]}]}``; ``version`` and ``crop_size`` are optional.

Floats are written with 17 significant digits so every value round-trips
bit-exactly; output never depends on locale or wall-clock time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .errors import DomainError, FileFormatError
from .geometry import CameraIntrinsics, Pose
from .uncertainty import PredictionSet

SCHEMA_VERSION = "pose-integrity/1"


def format_float(x: float) -> str:
    return format(float(x), ".17g")


def _encode(obj: Any) -> str:
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    if isinstance(obj, dict):
        return "{" + ", ".join(f"{json.dumps(str(k))}: {_encode(v)}" for k, v in obj.items()) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj: Any) -> str:
    """Single-line JSON with fixed 17-significant-digit floats."""
    return _encode(obj)


@dataclass
class Frame:
    predictions: PredictionSet
    truth: Optional[np.ndarray] = None
    true_pose: Optional[Pose] = None
    heatmaps: Optional[list[np.ndarray]] = None
    frame_id: Optional[str] = None


@dataclass
class PredictionFile:
    camera: CameraIntrinsics
    world_points: np.ndarray
    frames: list[Frame] = field(default_factory=list)
    init: Optional[dict] = None


def _require(doc: dict, key: str, where: str):
    if not isinstance(doc, dict) or key not in doc:
        raise FileFormatError(f"missing '{key}' in {where}")
    return doc[key]


def _array(value, shape_tail: tuple, what: str) -> np.ndarray:
    try:
        a = np.asarray(value, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{what}: not a numeric array") from exc
    if a.ndim != 1 + len(shape_tail) or a.shape[1:] != shape_tail:
        raise FileFormatError(f"{what}: expected shape (N, {', '.join(map(str, shape_tail))})")
    if not np.all(np.isfinite(a)):
        raise FileFormatError(f"{what}: non-finite values")
    return a


def parse_camera(doc) -> CameraIntrinsics:
    try:
        return CameraIntrinsics(
            fx=float(_require(doc, "fx", "camera")),
            fy=float(_require(doc, "fy", "camera")),
            cx=float(_require(doc, "cx", "camera")),
            cy=float(_require(doc, "cy", "camera")),
            width=int(_require(doc, "width", "camera")),
            height=int(_require(doc, "height", "camera")),
        )
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"camera: {exc}") from exc


def parse_heatmap(doc, where: str = "heatmap") -> np.ndarray:
    shape = _require(doc, "shape", where)
    values = _require(doc, "values", where)
    if not (isinstance(shape, list) and len(shape) == 2 and all(isinstance(s, int) for s in shape)):
        raise FileFormatError(f"{where}: shape must be [rows, cols]")
    try:
        flat = np.asarray(values, dtype=float)
    except (TypeError, ValueError) as exc:
        raise FileFormatError(f"{where}: values must be numbers") from exc
    if flat.ndim != 1 or flat.size != shape[0] * shape[1]:
        raise FileFormatError(f"{where}: {flat.size} values do not match shape {shape}")
    if shape[0] < 2 or shape[1] < 2:
        raise FileFormatError(f"{where}: heatmap needs at least 2 rows and 2 columns")
    return flat.reshape(shape)


def _parse_pose(doc, where: str) -> Pose:
    try:
        return Pose(
            np.asarray(_require(doc, "position", where), dtype=float),
            np.asarray(_require(doc, "rotation", where), dtype=float),
        )
    except (DomainError, ValueError, TypeError) as exc:
        raise FileFormatError(f"{where}: {exc}") from exc


def parse_prediction_file(doc) -> PredictionFile:
    if not isinstance(doc, dict):
        raise FileFormatError("prediction file must be a JSON object")
    version = doc.get("version")
    if version != SCHEMA_VERSION:
        raise FileFormatError(f"unsupported version {version!r}; expected {SCHEMA_VERSION!r}")
    camera = parse_camera(_require(doc, "camera", "file"))
    world = _array(_require(doc, "world_points", "file"), (3,), "world_points")
    frames_doc = _require(doc, "frames", "file")
    if not isinstance(frames_doc, list):
        raise FileFormatError("frames must be a list")
    frames = []
    for i, fd in enumerate(frames_doc):
        where = f"frame {i}"
        kps = _require(fd, "keypoints", where)
        if not isinstance(kps, list) or len(kps) != world.shape[0]:
            raise FileFormatError(f"{where}: expected {world.shape[0]} keypoints")
        mu = _array([_require(k, "mu_px", where) for k in kps], (2,), f"{where} mu_px")
        sigma = _array([_require(k, "sigma_px", where) for k in kps], (2,), f"{where} sigma_px")
        if np.any(sigma <= 0):
            raise FileFormatError(f"{where}: sigma_px must be positive")
        truth = None
        if fd.get("truth_px") is not None:
            truth = _array(fd["truth_px"], (2,), f"{where} truth_px")
            if truth.shape[0] != world.shape[0]:
                raise FileFormatError(f"{where}: truth_px length mismatch")
        true_pose = None
        if fd.get("true_pose") is not None:
            true_pose = _parse_pose(fd["true_pose"], f"{where} true_pose")
        heatmaps = None
        if fd.get("heatmaps") is not None:
            heatmaps = [parse_heatmap(h, f"{where} heatmap {j}") for j, h in enumerate(fd["heatmaps"])]
        frame_id = fd.get("id")
        frames.append(
            Frame(PredictionSet(mu, sigma), truth, true_pose, heatmaps,
                  None if frame_id is None else str(frame_id))
        )
    init = doc.get("init")
    if init is not None and not isinstance(init, dict):
        raise FileFormatError("init must be an object")
    return PredictionFile(camera, world, frames, init)


def read_json(path) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FileFormatError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise FileFormatError(f"{path}: {exc.strerror}") from exc


def load_prediction_file(path) -> PredictionFile:
    return parse_prediction_file(read_json(path))


def load_heatmaps(path) -> tuple[list[np.ndarray], Optional[tuple[float, float]]]:
    """Heatmaps from a heatmap file, or from the frames of a prediction file."""
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise FileFormatError("heatmap file must be a JSON object")
    crop = doc.get("crop_size")
    if crop is not None:
        if not (isinstance(crop, list) and len(crop) == 2):
            raise FileFormatError("crop_size must be [width, height]")
        crop = (float(crop[0]), float(crop[1]))
    if "heatmaps" in doc:
        items = doc["heatmaps"]
        if not isinstance(items, list) or not items:
            raise FileFormatError("heatmaps must be a nonempty list")
        return [parse_heatmap(h, f"heatmap {i}") for i, h in enumerate(items)], crop
    if "frames" in doc:
        maps = []
        for i, fd in enumerate(doc["frames"]):
            for j, h in enumerate(fd.get("heatmaps") or []):
                maps.append(parse_heatmap(h, f"frame {i} heatmap {j}"))
        if not maps:
            raise FileFormatError("no heatmaps present")
        return maps, crop
    raise FileFormatError("no heatmaps present")


def pose_to_dict(pose: Pose) -> dict:
    return {"position": pose.position.tolist(), "rotation": pose.rotation.tolist()}


def camera_to_dict(cam: CameraIntrinsics) -> dict:
    return {"fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
            "width": cam.width, "height": cam.height}


def frame_to_dict(frame: Frame) -> dict:
    d: dict = {}
    if frame.frame_id is not None:
        d["id"] = frame.frame_id
    d["keypoints"] = [
        {"mu_px": m.tolist(), "sigma_px": s.tolist()}
        for m, s in zip(frame.predictions.mu, frame.predictions.sigma)
    ]
    if frame.truth is not None:
        d["truth_px"] = np.asarray(frame.truth).tolist()
    if frame.true_pose is not None:
        d["true_pose"] = pose_to_dict(frame.true_pose)
    if frame.heatmaps is not None:
        d["heatmaps"] = [{"shape": list(h.shape), "values": h.ravel().tolist()} for h in frame.heatmaps]
    return d


def prediction_file_to_dict(pf: PredictionFile) -> dict:
    d = {
        "version": SCHEMA_VERSION,
        "camera": camera_to_dict(pf.camera),
        "world_points": np.asarray(pf.world_points).tolist(),
    }
    if pf.init is not None:
        d["init"] = dict(pf.init)
    d["frames"] = [frame_to_dict(f) for f in pf.frames]
    return d


def write_prediction_file(pf: PredictionFile, path) -> None:
    Path(path).write_text(dumps(prediction_file_to_dict(pf)) + "\n", encoding="utf-8")
