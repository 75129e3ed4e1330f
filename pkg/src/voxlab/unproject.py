"""Lift depth pixels into world-frame labeled points and route them into
static and dynamic clouds.

Depth maps hold the camera-z distance per pixel; entries that are
non-finite or <= 0 are invalid and produce no point.  Pixels whose fused
semantic class is ``unlabeled`` are dropped entirely: they cannot vote
during voxelization and carry no reliable geometry class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from voxlab.errors import ValidationError
from voxlab.masks import SemanticMask
from voxlab.scene import CameraModel, ClassTable


@dataclass
class LabeledPointCloud:
    """Column-wise point storage: world position, class, and pixel provenance."""

    positions: np.ndarray        # (N, 3) float64, world frame
    class_ids: np.ndarray        # (N,) int16
    frame_indices: np.ndarray    # (N,) int32
    camera_indices: np.ndarray   # (N,) int16
    pixels: np.ndarray = field(default=None)  # (N, 2) int32, (u, v)

    def __post_init__(self):
        if self.pixels is None:
            self.pixels = np.zeros((len(self.positions), 2), dtype=np.int32)

    @staticmethod
    def empty() -> "LabeledPointCloud":
        return LabeledPointCloud(
            positions=np.empty((0, 3), dtype=np.float64),
            class_ids=np.empty(0, dtype=np.int16),
            frame_indices=np.empty(0, dtype=np.int32),
            camera_indices=np.empty(0, dtype=np.int16),
            pixels=np.empty((0, 2), dtype=np.int32),
        )

    @staticmethod
    def concatenate(clouds: list["LabeledPointCloud"]) -> "LabeledPointCloud":
        if not clouds:
            return LabeledPointCloud.empty()
        return LabeledPointCloud(
            positions=np.concatenate([c.positions for c in clouds]),
            class_ids=np.concatenate([c.class_ids for c in clouds]),
            frame_indices=np.concatenate([c.frame_indices for c in clouds]),
            camera_indices=np.concatenate([c.camera_indices for c in clouds]),
            pixels=np.concatenate([c.pixels for c in clouds]),
        )

    def take(self, selector) -> "LabeledPointCloud":
        return LabeledPointCloud(
            positions=self.positions[selector],
            class_ids=self.class_ids[selector],
            frame_indices=self.frame_indices[selector],
            camera_indices=self.camera_indices[selector],
            pixels=self.pixels[selector],
        )

    def __len__(self) -> int:
        return len(self.positions)


def validate_depth(depth: np.ndarray, cam: CameraModel) -> np.ndarray:
    depth = np.asarray(depth, dtype=np.float64)
    if depth.shape != (cam.height, cam.width):
        raise ValidationError(
            f"depth map is {depth.shape}, camera declares {(cam.height, cam.width)}"
        )
    return depth


def unproject_pixel(u: float, v: float, depth: float, cam: CameraModel) -> np.ndarray:
    """World position of one pixel: T @ (K^-1 (u, v, 1) * depth).

    Raises:
        ValidationError: if the depth is non-finite or <= 0.
    """
    if not np.isfinite(depth) or depth <= 0:
        raise ValidationError(f"invalid depth {depth}")
    k_inv = np.linalg.inv(cam.intrinsics)
    cam_pt = k_inv @ np.array([u, v, 1.0]) * depth
    return cam.cam_to_world[:3, :3] @ cam_pt + cam.cam_to_world[:3, 3]


def _unproject_camera(frame_index: int, camera_index: int, cam: CameraModel,
                      depth: np.ndarray, mask: SemanticMask,
                      classes: ClassTable, stride: int) -> LabeledPointCloud:
    depth = validate_depth(depth, cam)
    if mask.classes.shape != depth.shape:
        raise ValidationError(
            f"semantic mask is {mask.classes.shape}, depth map is {depth.shape}"
        )
    valid = np.isfinite(depth) & (depth > 0) & (mask.classes != classes.unlabeled_id)
    if stride > 1:
        keep = np.zeros_like(valid)
        keep[::stride, ::stride] = True
        valid &= keep
    vs, us = np.nonzero(valid)  # row-major: v varies slowest -> (v, u) ordering
    if vs.size == 0:
        return LabeledPointCloud.empty()
    d = depth[vs, us]
    k_inv = np.linalg.inv(cam.intrinsics)
    pix = np.stack([us.astype(np.float64), vs.astype(np.float64), np.ones(us.size)], axis=1)
    cam_pts = (pix @ k_inv.T) * d[:, None]
    world = cam_pts @ cam.cam_to_world[:3, :3].T + cam.cam_to_world[:3, 3]
    return LabeledPointCloud(
        positions=world,
        class_ids=mask.classes[vs, us].astype(np.int16),
        frame_indices=np.full(us.size, frame_index, dtype=np.int32),
        camera_indices=np.full(us.size, camera_index, dtype=np.int16),
        pixels=np.stack([us, vs], axis=1).astype(np.int32),
    )


def split_frame(frame_index: int, cams: list[CameraModel],
                depths: list[np.ndarray], masks: list[SemanticMask],
                classes: ClassTable, stride: int = 1) -> tuple[LabeledPointCloud, LabeledPointCloud]:
    """Unproject one frame and route points by their class's dynamic flag.

    Every pixel with valid depth and a non-unlabeled class yields exactly one
    point, in deterministic (camera, v, u) order.  Returns (static, dynamic).
    """
    per_cam = [
        _unproject_camera(frame_index, ci, cam, depth, mask, classes, stride)
        for ci, (cam, depth, mask) in enumerate(zip(cams, depths, masks))
    ]
    cloud = LabeledPointCloud.concatenate(per_cam)
    dynamic_ids = classes.dynamic_ids
    if dynamic_ids:
        is_dynamic = np.isin(cloud.class_ids, np.fromiter(dynamic_ids, dtype=np.int16))
    else:
        is_dynamic = np.zeros(len(cloud), dtype=bool)
    return cloud.take(~is_dynamic), cloud.take(is_dynamic)
