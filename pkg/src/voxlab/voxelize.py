"""Voxel label voting and camera visibility masking.

A frame's cloud (accumulated static geometry plus that frame's dynamic
points) is voted into a dense semantic grid.  Within a cell, classes of the
lowest priority tier present outvote everything else, so thin objects like
cones and pedestrians are not drowned out by the road surface; remaining
ties go to the class with more points, then to the lower class id.

The visibility mask classifies every cell as free-visible, occupied-visible,
or unobserved by casting one ray per camera pixel through the labeled grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxlab import traversal
from voxlab.errors import ValidationError
from voxlab.scene import CameraModel, ClassTable, FramePose, GridSpec, invert_pose
from voxlab.traversal import FREE_VISIBLE, OCCUPIED_VISIBLE, UNOBSERVED
from voxlab.unproject import LabeledPointCloud

__all__ = [
    "VoxelGrid", "VisibilityGrid", "compose_frame_cloud", "voxelize",
    "visibility_mask", "FREE_VISIBLE", "OCCUPIED_VISIBLE", "UNOBSERVED",
]


@dataclass
class VoxelGrid:
    spec: GridSpec
    labels: np.ndarray  # dims-shaped uint8 class ids, including "empty"

    def __post_init__(self):
        if self.labels.shape != self.spec.dims:
            raise ValidationError(f"labels shape {self.labels.shape} != grid dims {self.spec.dims}")

    def occupancy(self, empty_id: int) -> np.ndarray:
        return self.labels != empty_id


@dataclass
class VisibilityGrid:
    spec: GridSpec
    state: np.ndarray  # dims-shaped uint8: UNOBSERVED / FREE_VISIBLE / OCCUPIED_VISIBLE

    def __post_init__(self):
        if self.state.shape != self.spec.dims:
            raise ValidationError(f"state shape {self.state.shape} != grid dims {self.spec.dims}")

    @property
    def observed(self) -> np.ndarray:
        return self.state != UNOBSERVED


def compose_frame_cloud(static_filtered: LabeledPointCloud,
                        dynamic_t: LabeledPointCloud) -> LabeledPointCloud:
    """Concatenate the global static cloud with one frame's dynamic cloud."""
    return LabeledPointCloud.concatenate([static_filtered, dynamic_t])


def voxelize(cloud: LabeledPointCloud, spec: GridSpec, classes: ClassTable) -> VoxelGrid:
    """Vote per-cell labels from a cloud already expressed in the grid frame.

    Cells without points are labeled empty.
    """
    labels = np.full(spec.dims, classes.empty_id, dtype=np.uint8).reshape(-1)
    if len(cloud):
        idx = spec.point_indices(cloud.positions)
        inb = spec.in_bounds(idx)
        if inb.any():
            lin = spec.linear_indices(idx[inb])
            cls = cloud.class_ids[inb].astype(np.int64)
            pair = lin * len(classes) + cls
            uniq, counts = np.unique(pair, return_counts=True)
            cell = uniq // len(classes)
            cls_u = uniq % len(classes)
            tier = classes.tier_array()[cls_u]
            # Winner per cell: lowest tier, then most points, then lowest id.
            order = np.lexsort((cls_u, -counts, tier, cell))
            cell_sorted = cell[order]
            first = np.ones(len(order), dtype=bool)
            first[1:] = cell_sorted[1:] != cell_sorted[:-1]
            labels[cell_sorted[first]] = cls_u[order][first].astype(np.uint8)
    return VoxelGrid(spec=spec, labels=labels.reshape(spec.dims))


def visibility_mask(grid: VoxelGrid, cameras: list[CameraModel], ego_pose: FramePose,
                    classes: ClassTable, stride: int = 1) -> VisibilityGrid:
    """Cast one ray per camera pixel through the labeled grid.

    Cells before a ray's first occupied cell become free-visible, the first
    occupied cell becomes occupied-visible, and cells no ray reaches stay
    unobserved.  Cameras are given in the world frame; the grid lives in the
    frame's ego frame.
    """
    occupancy = grid.occupancy(classes.empty_id)
    state = np.zeros(grid.spec.dims, dtype=np.uint8)
    world_to_ego = invert_pose(ego_pose.ego_to_world)
    for cam in cameras:
        cam_in_ego = CameraModel(
            intrinsics=cam.intrinsics,
            cam_to_world=world_to_ego @ cam.cam_to_world,
            width=cam.width,
            height=cam.height,
        )
        u, v = cam_in_ego.pixel_grid(stride)
        dirs = cam_in_ego.pixel_directions(u, v)
        origins = np.broadcast_to(cam_in_ego.center, dirs.shape)
        traversal.mark_visibility(origins, dirs, grid.spec, occupancy, state)
    return VisibilityGrid(spec=grid.spec, state=state)
