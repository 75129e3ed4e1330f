"""Writers for the label pipeline's interchange formats.

Implements the bit-exact layouts documented in the pipeline repository
(docs/FORMATS.md): the 16-byte raster header for depth maps, the detection
set format (text header + run-length binary masks), and the sequence
manifest JSON schema.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from vxadapter.backends import Detection

_RASTER_HEADER = struct.Struct("<4sHHII")


def write_depth(path: Path, depth: np.ndarray) -> None:
    h, w = depth.shape
    with open(path, "wb") as fh:
        fh.write(_RASTER_HEADER.pack(b"VXDP", 1, 0, w, h))
        fh.write(np.ascontiguousarray(depth, dtype="<f4").tobytes())


def _run_lengths(mask: np.ndarray) -> np.ndarray:
    flat = mask.ravel().astype(bool)
    if flat.size == 0:
        return np.zeros(0, dtype=np.uint32)
    edges = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    runs = np.diff(bounds)
    if flat[0]:  # runs alternate starting with zeros
        runs = np.concatenate([[0], runs])
    return runs.astype(np.uint32)


def write_detections(path: Path, dets: list[Detection], width: int, height: int) -> None:
    encoded = [_run_lengths(d.mask) for d in dets]
    lines = [f"VXDT 1 {width} {height} {len(dets)}"]
    for d, runs in zip(dets, encoded):
        lines.append(f"{d.class_id} {d.logit!r} {len(runs)}")
    lines.append("END\n")
    with open(path, "wb") as fh:
        fh.write("\n".join(lines).encode("ascii"))
        for runs in encoded:
            fh.write(runs.astype("<u4").tobytes())


def write_manifest(path: Path, sequence_id: str, frames: list[dict]) -> None:
    """``frames``: list of {timestamp_us, ego_to_world, cameras: [...]} dicts
    with paths already relative to the manifest directory."""
    with open(path, "w") as fh:
        json.dump({"sequence_id": sequence_id, "frames": frames}, fh, indent=2)


def camera_record(intrinsics: np.ndarray, cam_to_world: np.ndarray, width: int,
                  height: int, depth_path: str, mask_path: str) -> dict:
    return {
        "intrinsics": np.asarray(intrinsics).tolist(),
        "cam_to_world": np.asarray(cam_to_world).tolist(),
        "width": int(width),
        "height": int(height),
        "depth_path": depth_path,
        "mask_path": mask_path,
    }
