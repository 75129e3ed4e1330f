"""Export a raw capture as pipeline-ready interchange files.

Per frame and camera the adapter dumps the geometry backend's depth map and
the segmenter's raw detections; all filtering, thresholding, and fusion stay
in the label pipeline, which is invoked through its ``fuse-masks`` CLI to
materialize the semantic masks the manifest references.

Frames whose outputs already exist are skipped, so interrupted exports
resume where they stopped and a rerun over a completed directory is a no-op.
Backend failures are collected per frame and reported together at the end.
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass
from pathlib import Path

from vxadapter.backends import GeometryBackend, SegmentationBackend
from vxadapter.config import AdapterConfig
from vxadapter.dataset import RawSequence, load_sequence
from vxadapter import interchange


class ExportError(Exception):
    pass


@dataclass
class ExportResult:
    manifest_path: Path
    frames_done: int
    frames_skipped: int
    failures: list[tuple[int, str]]  # (frame index, message)


def _frame_stem(frame_index: int, camera: str) -> str:
    return f"f{frame_index:03d}_{camera}"


def export_sequence(config: AdapterConfig, geometry: GeometryBackend,
                    segmentation: SegmentationBackend) -> ExportResult:
    seq = load_sequence(config.dataset_root, config.sequence)
    out = Path(config.output_dir)
    frames_dir = out / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    queries = config.queries()

    failures: list[tuple[int, str]] = []
    done = skipped = 0
    for frame in seq.frames:
        targets = []
        for cam in seq.cameras:
            stem = _frame_stem(frame.index, cam.name)
            targets.append((cam, frames_dir / f"{stem}.vxdp", frames_dir / f"{stem}.vxdt"))
        if all(d.exists() and t.exists() for _, d, t in targets):
            skipped += 1
            continue
        try:
            for cam, depth_path, det_path in targets:
                depth = geometry.depth_map(frame, cam)
                if depth.shape != (cam.height, cam.width):
                    raise ExportError(
                        f"geometry backend returned {depth.shape} for camera "
                        f"{cam.name}, expected {(cam.height, cam.width)}")
                dets = segmentation.detect(frame, cam, queries)
                interchange.write_depth(depth_path, depth)
                interchange.write_detections(det_path, dets, cam.width, cam.height)
            done += 1
        except Exception as exc:  # backends are third-party code
            failures.append((frame.index, str(exc)))
            for _, depth_path, det_path in targets:  # drop partial frame output
                depth_path.unlink(missing_ok=True)
                det_path.unlink(missing_ok=True)

    _fuse_masks(config, frames_dir)
    manifest_path = _write_manifest(config, seq, out)

    if failures:
        summary = "; ".join(f"frame {i}: {msg}" for i, msg in failures)
        raise ExportError(f"{len(failures)} frame(s) failed (partial output kept): {summary}")
    return ExportResult(manifest_path=manifest_path, frames_done=done,
                        frames_skipped=skipped, failures=failures)


def _fuse_masks(config: AdapterConfig, frames_dir: Path) -> None:
    cmd = [*config.fuse_command, "fuse-masks",
           "--detections", str(frames_dir), "--out", str(frames_dir),
           "--threshold", str(config.logit_threshold)]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    if proc.returncode != 0:
        raise ExportError(f"mask fusion failed (exit {proc.returncode}): {proc.stderr.strip()}")


def _write_manifest(config: AdapterConfig, seq: RawSequence, out: Path) -> Path:
    frames = []
    for frame in seq.frames:
        cams = []
        for cam in seq.cameras:
            stem = _frame_stem(frame.index, cam.name)
            cams.append(interchange.camera_record(
                intrinsics=cam.intrinsics,
                cam_to_world=frame.ego_to_world @ cam.cam_to_ego,
                width=cam.width, height=cam.height,
                depth_path=f"frames/{stem}.vxdp",
                mask_path=f"frames/{stem}.vxsm",
            ))
        frames.append({
            "timestamp_us": frame.timestamp_us,
            "ego_to_world": frame.ego_to_world.tolist(),
            "cameras": cams,
        })
    manifest_path = out / "manifest.json"
    interchange.write_manifest(manifest_path, seq.sequence_id, frames)
    return manifest_path
