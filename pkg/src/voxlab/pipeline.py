"""End-to-end label generation: manifest in, per-frame voxel grids out.

Three modes mirror the pipeline ablations:

- ``per_frame``: no temporal aggregation; every frame is voxelized from its
  own points only (dynamic classes are not treated specially).
- ``aggregate_no_dynamics``: all points, dynamic classes included, are
  accumulated into one static cloud across the sequence.
- ``full``: static classes are accumulated and confidence-filtered, dynamic
  points are reintroduced per frame unfiltered (the default).

Worker parallelism only changes chunking of commutative integer reductions
and the scheduling of independent per-frame jobs, so outputs are
byte-identical for any worker count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from voxlab import filters, formats
from voxlab.errors import ValidationError, VoxlabError
from voxlab.masks import DEFAULT_LOGIT_THRESHOLD, SemanticMask
from voxlab.scene import (
    ClassTable, Frame, GridSpec, SequenceManifest, default_class_table,
    invert_pose, transform_point, transform_points,
)
from voxlab.unproject import LabeledPointCloud, split_frame
from voxlab.voxelize import VisibilityGrid, VoxelGrid, compose_frame_cloud, visibility_mask, voxelize

MODES = ("per_frame", "aggregate_no_dynamics", "full")

WORKERS_ENV_VAR = "VOXLAB_WORKERS"


@dataclass(frozen=True)
class PipelineConfig:
    mode: str = "full"
    grid: GridSpec = field(default_factory=GridSpec.default)
    logit_threshold: float = DEFAULT_LOGIT_THRESHOLD
    min_points: int = filters.DEFAULT_MIN_POINTS
    point_stride: int = 1
    visibility_stride: int = 1
    filters_enabled: bool = True
    workers: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValidationError(f"unknown mode {self.mode!r}, expected one of {MODES}")
        if not (0.0 < self.logit_threshold < 1.0):
            raise ValidationError("logit_threshold must be in (0, 1)")
        if self.min_points < 1 or self.point_stride < 1 or self.visibility_stride < 1:
            raise ValidationError("min_points and strides must be >= 1")


def config_from_dict(data: dict, base: PipelineConfig | None = None) -> PipelineConfig:
    """Overlay a config-file dict onto an existing config."""
    base = base or PipelineConfig()
    kwargs = {}
    known = {"mode", "logit_threshold", "min_points", "point_stride",
             "visibility_stride", "filters_enabled", "workers", "seed"}
    for key, value in data.items():
        if key == "grid":
            kwargs["grid"] = GridSpec(
                origin=np.asarray(value["origin"], dtype=np.float64),
                resolution=float(value["resolution"]),
                dims=tuple(value["dims"]),
            )
        elif key in known:
            kwargs[key] = value
        else:
            raise ValidationError(f"unknown config key {key!r}")
    return replace(base, **kwargs)


def effective_workers(config: PipelineConfig) -> int:
    env = os.environ.get(WORKERS_ENV_VAR)
    if env:
        return max(1, int(env))
    return max(1, config.workers)


@dataclass
class FrameLabels:
    frame_index: int
    grid: VoxelGrid
    visibility: VisibilityGrid


def _map_frames(fn, items, workers: int):
    """Order-preserving map, optionally on a thread pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _load_frame(frame_index: int, frame: Frame, classes: ClassTable,
                threshold: float, stride: int) -> tuple[LabeledPointCloud, LabeledPointCloud]:
    cams, depths, masks = [], [], []
    for ci, rec in enumerate(frame.cameras):
        try:
            depth = formats.read_depth(rec.depth_path)
            mask = formats.read_semantic_mask(rec.mask_path)
        except (OSError, VoxlabError) as exc:
            raise type(exc)(f"frame {frame_index} camera {ci}: {exc}") from exc
        # Enforce the fusion threshold even on externally produced masks.
        weak = mask.logits < threshold
        if weak.any():
            cls = mask.classes.copy()
            cls[weak] = classes.unlabeled_id
            mask = SemanticMask(classes=cls, logits=mask.logits)
        cams.append(rec.camera)
        depths.append(depth)
        masks.append(mask)
    return split_frame(frame_index, cams, depths, masks, classes, stride=stride)


def _camera_centers(manifest: SequenceManifest) -> np.ndarray:
    return np.array(
        [[rec.camera.center for rec in fr.cameras] for fr in manifest.frames],
        dtype=np.float64,
    )


def _ray_origins(cloud: LabeledPointCloud, centers: np.ndarray) -> np.ndarray:
    return centers[cloud.frame_indices, cloud.camera_indices]


def _apply_filters(cloud: LabeledPointCloud, centers: np.ndarray, config: PipelineConfig,
                   anchor: np.ndarray, workers: int,
                   stats_out: list | None = None) -> LabeledPointCloud:
    if not config.filters_enabled or len(cloud) == 0:
        return cloud
    # Counting lattice: label resolution, world axes, phase-locked to the
    # anchor, grown to cover every point and camera origin.
    origins = _ray_origins(cloud, centers)
    extent = np.concatenate([cloud.positions, origins.reshape(-1, 3)])
    grid = filters.covering_grid(anchor, config.grid.resolution, extent)
    if stats_out is not None:
        stats_out.append(filters.compute_cell_stats(cloud, origins, grid, workers))
    keep = filters.ray_consistency_mask(cloud, origins, grid, workers)
    cloud = cloud.take(keep)
    cloud = filters.density_filter(cloud, grid, config.min_points)
    return cloud


def run_pipeline(manifest: SequenceManifest, config: PipelineConfig,
                 classes: ClassTable | None = None, out_dir: Path | None = None,
                 cell_stats_path: Path | None = None) -> list[FrameLabels]:
    """Generate per-frame semantic grids and visibility masks.

    When ``out_dir`` is given, each frame is written to
    ``labels_NNN.vxgr`` with the visibility plane appended.
    """
    classes = classes or default_class_table()
    workers = effective_workers(config)
    centers = _camera_centers(manifest)
    if len(manifest.frames) == 0:
        return []

    loaded = _map_frames(
        lambda item: _load_frame(item[0], item[1], classes, config.logit_threshold,
                                 config.point_stride),
        list(enumerate(manifest.frames)),
        workers,
    )

    anchor = transform_point(manifest.frames[0].pose.ego_to_world, config.grid.origin)
    stats_out: list | None = [] if cell_stats_path is not None else None

    per_frame_clouds: list[LabeledPointCloud]
    dynamic_clouds: list[LabeledPointCloud]
    if config.mode == "per_frame":
        per_frame_clouds = [
            _apply_filters(LabeledPointCloud.concatenate([stat, dyn]), centers, config,
                           anchor, workers, stats_out)
            for stat, dyn in loaded
        ]
        dynamic_clouds = [LabeledPointCloud.empty() for _ in loaded]
    else:
        if config.mode == "aggregate_no_dynamics":
            static_parts = [LabeledPointCloud.concatenate([stat, dyn]) for stat, dyn in loaded]
            dynamic_clouds = [LabeledPointCloud.empty() for _ in loaded]
        else:  # full
            static_parts = [stat for stat, _ in loaded]
            dynamic_clouds = [dyn for _, dyn in loaded]
        static = filters.accumulate_static(static_parts)
        static = _apply_filters(static, centers, config, anchor, workers, stats_out)
        per_frame_clouds = [static] * len(manifest.frames)

    if cell_stats_path is not None and stats_out:
        # Merge per-chunk stats cell-by-cell onto the shared anchor lattice.
        formats.write_cell_stats(cell_stats_path, _merged_stats_rows(stats_out, anchor))

    def _label_frame(item) -> FrameLabels:
        t, frame = item
        cloud = compose_frame_cloud(per_frame_clouds[t], dynamic_clouds[t])
        ego = frame.pose
        local = LabeledPointCloud(
            positions=transform_points(invert_pose(ego.ego_to_world), cloud.positions),
            class_ids=cloud.class_ids,
            frame_indices=cloud.frame_indices,
            camera_indices=cloud.camera_indices,
            pixels=cloud.pixels,
        )
        grid = voxelize(local, config.grid, classes)
        vis = visibility_mask(grid, [rec.camera for rec in frame.cameras], ego,
                              classes, stride=config.visibility_stride)
        return FrameLabels(frame_index=t, grid=grid, visibility=vis)

    results = _map_frames(_label_frame, list(enumerate(manifest.frames)), workers)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for res in results:
            formats.write_grid(out_dir / f"labels_{res.frame_index:03d}.vxgr",
                               res.grid, res.visibility)
    return results


def _merged_stats_rows(stats: list, anchor: np.ndarray) -> np.ndarray:
    """Combine CellStats dumps onto one lattice; indices are anchor-relative."""
    merged: dict[tuple[int, int, int], np.ndarray] = {}
    for s in stats:
        # Covering grids share the anchor's lattice phase, so this is integral.
        off = np.round((s.grid.origin - anchor) / s.grid.resolution).astype(np.int64)
        for row in s.sparse_rows():
            key = (int(row[0] + off[0]), int(row[1] + off[1]), int(row[2] + off[2]))
            if key in merged:
                merged[key][3:] += row[3:]
            else:
                entry = row.copy()
                entry[:3] = key
                merged[key] = entry
    if not merged:
        return np.zeros((0, 6), dtype=np.int64)
    return np.stack([merged[k] for k in sorted(merged)])
