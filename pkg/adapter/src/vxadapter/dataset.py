"""Raw capture layout: discovery and validation.

Expected structure under the dataset root:

    <root>/<sequence>/
        calibration.json        per-camera intrinsics and mounts
        frames/<NNN>/
            ego_pose.json       ego_to_world + timestamp_us
            <camera>.png        one image per calibrated camera

calibration.json:
    {"cameras": {"cam0": {"intrinsics": [[...3x3...]],
                          "cam_to_ego": [[...4x4...]],
                          "width": 1600, "height": 900}, ...}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class DatasetError(Exception):
    pass


@dataclass(frozen=True)
class CameraCalib:
    name: str
    intrinsics: np.ndarray   # 3x3
    cam_to_ego: np.ndarray   # 4x4
    width: int
    height: int


@dataclass(frozen=True)
class RawFrame:
    index: int
    ego_to_world: np.ndarray
    timestamp_us: int
    images: dict[str, Path]  # camera name -> image file


@dataclass(frozen=True)
class RawSequence:
    sequence_id: str
    cameras: tuple[CameraCalib, ...]
    frames: tuple[RawFrame, ...]


def _matrix(data, shape, what: str) -> np.ndarray:
    m = np.asarray(data, dtype=np.float64)
    if m.shape != shape:
        raise DatasetError(f"{what}: expected shape {shape}, got {m.shape}")
    return m


def load_sequence(root: Path, sequence: str) -> RawSequence:
    seq_dir = Path(root) / sequence
    calib_path = seq_dir / "calibration.json"
    if not calib_path.is_file():
        raise DatasetError(f"{sequence}: missing calibration.json")
    with open(calib_path) as fh:
        calib_raw = json.load(fh)
    cameras = []
    for name in sorted(calib_raw.get("cameras", {})):
        rec = calib_raw["cameras"][name]
        for key in ("intrinsics", "cam_to_ego", "width", "height"):
            if key not in rec:
                raise DatasetError(f"camera {name}: missing calibration field {key!r}")
        cameras.append(CameraCalib(
            name=name,
            intrinsics=_matrix(rec["intrinsics"], (3, 3), f"camera {name} intrinsics"),
            cam_to_ego=_matrix(rec["cam_to_ego"], (4, 4), f"camera {name} cam_to_ego"),
            width=int(rec["width"]),
            height=int(rec["height"]),
        ))
    if not cameras:
        raise DatasetError(f"{sequence}: calibration declares no cameras")

    frames_dir = seq_dir / "frames"
    if not frames_dir.is_dir():
        raise DatasetError(f"{sequence}: missing frames/ directory")
    frames = []
    for idx, frame_dir in enumerate(sorted(p for p in frames_dir.iterdir() if p.is_dir())):
        pose_path = frame_dir / "ego_pose.json"
        if not pose_path.is_file():
            raise DatasetError(f"frame {frame_dir.name}: missing ego_pose.json")
        with open(pose_path) as fh:
            pose_raw = json.load(fh)
        images = {}
        for cam in cameras:
            img = frame_dir / f"{cam.name}.png"
            if not img.is_file():
                raise DatasetError(f"frame {frame_dir.name}: missing image for camera {cam.name}")
            images[cam.name] = img
        frames.append(RawFrame(
            index=idx,
            ego_to_world=_matrix(pose_raw["ego_to_world"], (4, 4),
                                 f"frame {frame_dir.name} ego_to_world"),
            timestamp_us=int(pose_raw.get("timestamp_us", idx)),
            images=images,
        ))
    if not frames:
        raise DatasetError(f"{sequence}: no frames found")
    return RawSequence(sequence_id=sequence, cameras=tuple(cameras), frames=tuple(frames))
