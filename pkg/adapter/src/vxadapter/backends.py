"""Model backends: protocols plus deterministic stubs.

Real deployments plug a geometry foundation model (metric depth + optional
pose refinement) and an open-vocabulary detector/segmenter behind these two
protocols.  The stubs synthesize a plausible scene analytically from the
calibration alone, so the adapter, interchange files, and the downstream
label pipeline can be exercised end to end without model weights or a GPU.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from vxadapter.config import BACKGROUND_CLASS
from vxadapter.dataset import CameraCalib, RawFrame


@dataclass(frozen=True)
class Detection:
    """One detector box grown to a pixel mask, with its raw logit."""

    class_id: int       # BACKGROUND_CLASS for background-token boxes
    logit: float
    mask: np.ndarray    # (height, width) bool


class GeometryBackend(Protocol):
    def depth_map(self, frame: RawFrame, camera: CameraCalib) -> np.ndarray:
        """Metric z-depth per pixel, (height, width); invalid pixels <= 0."""
        ...


class SegmentationBackend(Protocol):
    def detect(self, frame: RawFrame, camera: CameraCalib,
               queries: list[tuple[int, str]]) -> list[Detection]:
        """Raw detections for the per-class queries (unfiltered, unfused)."""
        ...


class StubGeometryBackend:
    """Analytic depth against a vertical wall at a fixed world x.

    Depth lands ``penetration`` meters past the wall plane, the way a depth
    model localizes a surface inside a voxel rather than on its boundary;
    rays that never reach the wall get invalid depth.  Deterministic.
    """

    def __init__(self, wall_x: float = 12.0, penetration: float = 0.2,
                 max_depth: float = 60.0):
        self.wall_x = wall_x
        self.penetration = penetration
        self.max_depth = max_depth

    def depth_map(self, frame: RawFrame, camera: CameraCalib) -> np.ndarray:
        cam_to_world = frame.ego_to_world @ camera.cam_to_ego
        k_inv = np.linalg.inv(camera.intrinsics)
        us, vs = np.meshgrid(np.arange(camera.width), np.arange(camera.height))
        pix = np.stack([us.ravel(), vs.ravel(), np.ones(us.size)], axis=1)
        dirs = (pix @ k_inv.T) @ cam_to_world[:3, :3].T
        origin = cam_to_world[:3, 3]

        with np.errstate(divide="ignore", invalid="ignore"):
            t = (self.wall_x + self.penetration - origin[0]) / dirs[:, 0]
        depth = np.where(np.isfinite(t) & (t > 0) & (t <= self.max_depth), t, 0.0)
        return depth.reshape(camera.height, camera.width)


class StubSegmentationBackend:
    """Band-structured detections mirroring the stub geometry: ground band,
    wall band, a sky background box, one weak spurious box."""

    def detect(self, frame: RawFrame, camera: CameraCalib,
               queries: list[tuple[int, str]]) -> list[Detection]:
        h, w = camera.height, camera.width
        class_ids = {cid for cid, _ in queries}
        out = []

        ground = np.zeros((h, w), dtype=bool)
        ground[int(h * 0.55):] = True
        wall = np.zeros((h, w), dtype=bool)
        wall[int(h * 0.2):int(h * 0.55)] = True
        sky = np.zeros((h, w), dtype=bool)
        sky[:int(h * 0.2)] = True

        if 10 in class_ids:  # driveable_surface
            out.append(Detection(class_id=10, logit=0.85, mask=ground))
        if 13 in class_ids:  # manmade
            out.append(Detection(class_id=13, logit=0.6, mask=wall))
        # Background-token box over the sky region: fusion must discard it.
        out.append(Detection(class_id=BACKGROUND_CLASS, logit=0.9, mask=sky))
        if 3 in class_ids:  # a weak spurious car box, below the 0.2 threshold
            weak = np.zeros((h, w), dtype=bool)
            weak[int(h * 0.3):int(h * 0.4), int(w * 0.4):int(w * 0.6)] = True
            out.append(Detection(class_id=3, logit=0.1, mask=weak))
        return out
