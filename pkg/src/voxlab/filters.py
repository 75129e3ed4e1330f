"""Static-cloud accumulation and the two confidence filters.

The ray-consistency filter compares, per voxel cell, how many pixel rays
pass through the cell against how many terminate inside it; cells that are
crossed strictly more often than they are confirmed lose their points.  The
density filter then removes points in cells holding fewer than a minimum
number of points.  Both filters only ever remove points and are idempotent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxlab import traversal
from voxlab.errors import ValidationError
from voxlab.scene import GridSpec
from voxlab.unproject import LabeledPointCloud

DEFAULT_MIN_POINTS = 4


@dataclass
class CellStats:
    """Dense pass/hit/point counts over a counting grid."""

    grid: GridSpec
    pass_counts: np.ndarray   # dims-shaped int32, traversals that exit the cell
    hit_counts: np.ndarray    # dims-shaped int32, rays terminating in the cell
    point_counts: np.ndarray  # dims-shaped int32, points contained in the cell

    def sparse_rows(self) -> np.ndarray:
        """Rows (ix, iy, iz, pass, hit, points) for cells with any nonzero count."""
        any_count = (self.pass_counts > 0) | (self.hit_counts > 0) | (self.point_counts > 0)
        idx = np.argwhere(any_count)
        rows = np.zeros((len(idx), 6), dtype=np.int64)
        rows[:, :3] = idx
        rows[:, 3] = self.pass_counts[any_count]
        rows[:, 4] = self.hit_counts[any_count]
        rows[:, 5] = self.point_counts[any_count]
        return rows


def accumulate_static(per_frame_clouds: list[LabeledPointCloud]) -> LabeledPointCloud:
    """Concatenate per-frame static clouds in frame order."""
    return LabeledPointCloud.concatenate(per_frame_clouds)


def covering_grid(anchor_origin, resolution: float, points: np.ndarray, margin_cells: int = 1) -> GridSpec:
    """Extend a lattice anchored at ``anchor_origin`` to cover all points.

    The returned grid keeps the anchor's lattice phase: its origin differs
    from the anchor by a whole number of cells along each axis.
    """
    anchor = np.asarray(anchor_origin, dtype=np.float64)
    if len(points) == 0:
        return GridSpec(anchor, resolution, (1, 1, 1))
    lo = np.floor((points.min(axis=0) - anchor) / resolution).astype(np.int64) - margin_cells
    hi = np.floor((points.max(axis=0) - anchor) / resolution).astype(np.int64) + 1 + margin_cells
    return GridSpec(anchor + lo * resolution, resolution, tuple(hi - lo))


def _count_chunked(origins: np.ndarray, endpoints: np.ndarray, grid: GridSpec,
                   out: np.ndarray, workers: int) -> None:
    # Chunked integer accumulation: sums commute, so the result is
    # byte-identical for any chunk count.
    n = len(origins)
    chunks = max(1, int(workers))
    bounds = np.linspace(0, n, chunks + 1, dtype=np.int64)
    for a, b in zip(bounds[:-1], bounds[1:]):
        if a == b:
            continue
        traversal.count_exited_cells(origins[a:b], endpoints[a:b], grid, out)


def compute_cell_stats(cloud: LabeledPointCloud, ray_origins: np.ndarray,
                       grid: GridSpec, workers: int = 1) -> CellStats:
    """Pass/hit/point counts for one cloud whose rays end at its points."""
    ray_origins = np.asarray(ray_origins, dtype=np.float64)
    if ray_origins.shape != (len(cloud), 3):
        raise ValidationError(
            f"expected one ray origin per point, got {ray_origins.shape} for {len(cloud)} points"
        )
    pass_counts = np.zeros(grid.dims, dtype=np.int32)
    _count_chunked(ray_origins, cloud.positions, grid, pass_counts, workers)

    idx = grid.point_indices(cloud.positions)
    inb = grid.in_bounds(idx)
    lin = grid.linear_indices(idx[inb])
    hit_counts = np.bincount(lin, minlength=grid.num_cells).astype(np.int32).reshape(grid.dims)
    # Every point terminates exactly one ray, so point and hit counts coincide
    # here; they are tracked separately because the density filter may run on
    # clouds that carry no rays at all.
    return CellStats(grid=grid, pass_counts=pass_counts, hit_counts=hit_counts,
                     point_counts=hit_counts.copy())


def ray_consistency_mask(cloud: LabeledPointCloud, ray_origins: np.ndarray,
                         grid: GridSpec, workers: int = 1) -> np.ndarray:
    """Keep-mask: True for points whose cell is confirmed at least as often as
    it is crossed (pass <= hit).  Points outside the grid are kept."""
    stats = compute_cell_stats(cloud, ray_origins, grid, workers)
    idx = grid.point_indices(cloud.positions)
    inb = grid.in_bounds(idx)
    keep = np.ones(len(cloud), dtype=bool)
    lin = grid.linear_indices(idx[inb])
    bad = stats.pass_counts.reshape(-1)[lin] > stats.hit_counts.reshape(-1)[lin]
    keep[np.nonzero(inb)[0][bad]] = False
    return keep


def ray_consistency_filter(cloud: LabeledPointCloud, ray_origins: np.ndarray,
                           grid: GridSpec, workers: int = 1) -> LabeledPointCloud:
    return cloud.take(ray_consistency_mask(cloud, ray_origins, grid, workers))


def density_mask(cloud: LabeledPointCloud, grid: GridSpec,
                 min_points: int = DEFAULT_MIN_POINTS) -> np.ndarray:
    """Keep-mask: True for points in cells holding at least ``min_points``
    points.  Points outside the grid are kept."""
    if min_points < 1:
        raise ValidationError(f"min_points must be >= 1, got {min_points}")
    idx = grid.point_indices(cloud.positions)
    inb = grid.in_bounds(idx)
    keep = np.ones(len(cloud), dtype=bool)
    lin = grid.linear_indices(idx[inb])
    counts = np.bincount(lin, minlength=grid.num_cells)
    keep[np.nonzero(inb)[0][counts[lin] < min_points]] = False
    return keep


def density_filter(cloud: LabeledPointCloud, grid: GridSpec,
                   min_points: int = DEFAULT_MIN_POINTS) -> LabeledPointCloud:
    return cloud.take(density_mask(cloud, grid, min_points))
