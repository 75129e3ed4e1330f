"""Deterministic synthetic scenes and an exact depth/mask renderer.

The renderer casts the same grid traversal used by the label pipeline, so a
rendered depth pixel always unprojects back into the voxel it was sampled
from: grid hits report the depth of the chord midpoint inside the hit cell,
box hits report a depth half a cell behind the entry face.  That makes the
harness a closed-loop oracle: render a world, run the pipeline, and compare
against the world's own voxels.

All randomness flows through a counter-based Philox generator seeded
explicitly, so identical inputs give byte-identical scenes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from voxlab import formats, traversal
from voxlab.errors import ValidationError
from voxlab.masks import SemanticMask
from voxlab.scene import (
    CameraModel, CameraRecord, Frame, FramePose, GridSpec, SequenceManifest,
    default_class_table, manifest_to_json, transform_points, yaw_pose,
)
from voxlab.voxelize import VoxelGrid


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class ActorSpec:
    """Axis-aligned box of a dynamic class on a linear trajectory."""

    class_name: str
    extents: tuple[float, float, float]      # full box size, meters
    start: tuple[float, float, float]        # box center at frame 0, world frame
    velocity: tuple[float, float, float]     # meters per frame

    def center_at(self, frame: int) -> np.ndarray:
        return np.asarray(self.start) + frame * np.asarray(self.velocity)


@dataclass(frozen=True)
class ScenarioSpec:
    size: tuple[float, float, float] = (20.0, 20.0, 4.0)
    resolution: float = 0.4
    num_walls: int = 3
    num_pillars: int = 4
    actors: tuple[ActorSpec, ...] = ()
    num_random_actors: int = 0
    num_frames: int = 3
    # Ego rig: starts at ego_start, advances ego_step per frame, no rotation.
    ego_start: tuple[float, float, float] = (0.0, 0.0, 1.6)
    ego_step: tuple[float, float, float] = (2.0, 0.0, 0.0)
    cam_width: int = 128
    cam_height: int = 96
    cam_fov_deg: float = 70.0
    cam_pitch_deg: float = 12.0  # downward tilt so the ground enters the frustum
    # Camera mounts as (yaw_rad, lateral_offset_m) pairs relative to the ego.
    cam_mounts: tuple[tuple[float, float], ...] = ((0.25, -0.5), (-0.25, 0.5))


@dataclass
class SyntheticWorld:
    static: VoxelGrid                 # world frame
    actors: tuple["_Actor", ...]
    classes: ClassTable


@dataclass(frozen=True)
class _Actor:
    class_id: int
    extents: np.ndarray
    start: np.ndarray
    velocity: np.ndarray

    def center_at(self, frame: int) -> np.ndarray:
        return self.start + frame * self.velocity


def _fill_box(labels: np.ndarray, spec: GridSpec, lo, hi, class_id: int) -> None:
    """Label all cells whose extent intersects the metric box [lo, hi)."""
    lo_idx = np.maximum(spec.point_indices(np.asarray(lo, dtype=np.float64)[None])[0], 0)
    hi_idx = np.minimum(
        np.ceil((np.asarray(hi) - spec.origin) / spec.resolution - 1e-9).astype(np.int64),
        np.asarray(spec.dims),
    )
    if np.any(hi_idx <= lo_idx):
        return
    labels[lo_idx[0]:hi_idx[0], lo_idx[1]:hi_idx[1], lo_idx[2]:hi_idx[2]] = class_id


def build_world(spec: ScenarioSpec, seed: int) -> SyntheticWorld:
    """Ground plane, random walls and pillars, plus the configured actors.

    The world grid is centered on x/y with z starting at 0.  The same
    spec+seed always builds the identical world.
    """
    if min(spec.size) <= 0 or spec.resolution <= 0:
        raise ValidationError("scenario must have positive extent and resolution")
    classes = default_class_table()
    sx, sy, sz = spec.size
    grid = GridSpec.from_bounds((-sx / 2, -sy / 2, 0.0), (sx / 2, sy / 2, sz), spec.resolution)
    labels = np.full(grid.dims, classes.empty_id, dtype=np.uint8)
    rng = _rng(seed)

    road = classes.id_of("driveable_surface")
    wall_cls = classes.id_of("manmade")
    pillar_cls = classes.id_of("vegetation")
    labels[:, :, 0] = road  # one-cell-thick ground

    res = spec.resolution
    z0 = res  # everything sits on the ground layer
    for _ in range(spec.num_walls):
        along_x = rng.random() < 0.5
        length = rng.uniform(0.25, 0.6) * (sx if along_x else sy)
        height = rng.uniform(0.4, 0.9) * (sz - z0)
        cx = rng.uniform(-sx / 2 + length / 2, sx / 2 - length / 2)
        cy = rng.uniform(-sy * 0.4, sy * 0.4)
        thick = res
        if along_x:
            lo = (cx - length / 2, cy - thick / 2, z0)
            hi = (cx + length / 2, cy + thick / 2, z0 + height)
        else:
            lo = (cy - thick / 2, cx - length / 2, z0)
            hi = (cy + thick / 2, cx + length / 2, z0 + height)
        _fill_box(labels, grid, lo, hi, wall_cls)

    for _ in range(spec.num_pillars):
        px = rng.uniform(-sx * 0.45, sx * 0.45)
        py = rng.uniform(-sy * 0.45, sy * 0.45)
        height = rng.uniform(0.5, 0.95) * (sz - z0)
        side = res * rng.integers(1, 3)
        _fill_box(labels, grid, (px, py, z0), (px + side, py + side, z0 + height), pillar_cls)

    actors = [
        _Actor(
            class_id=classes.id_of(a.class_name),
            extents=np.asarray(a.extents, dtype=np.float64),
            start=np.asarray(a.start, dtype=np.float64),
            velocity=np.asarray(a.velocity, dtype=np.float64),
        )
        for a in spec.actors
    ]
    for _ in range(spec.num_random_actors):
        ext = np.array([rng.uniform(1.5, 4.0), rng.uniform(1.5, 2.2), rng.uniform(1.2, 1.8)])
        start = np.array([rng.uniform(-sx / 3, sx / 3), rng.uniform(-sy / 3, sy / 3), z0 + ext[2] / 2])
        vel = np.array([rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), 0.0])
        actors.append(_Actor(class_id=classes.id_of("car"), extents=ext, start=start, velocity=vel))
    for a in actors:
        if a.class_id not in classes.dynamic_ids:
            raise ValidationError(f"actor class {classes[a.class_id].name!r} is not dynamic")

    return SyntheticWorld(static=VoxelGrid(spec=grid, labels=labels), actors=tuple(actors), classes=classes)


def _box_intersect(origins: np.ndarray, dirs: np.ndarray, lo: np.ndarray,
                   hi: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Slab test: returns (valid, t_in, t_out) per ray for one AABB."""
    with np.errstate(divide="ignore", invalid="ignore"):
        d_safe = np.where(dirs == 0.0, 1.0, dirs)
        ta = (lo - origins) / d_safe
        tb = (hi - origins) / d_safe
    t_lo = np.minimum(ta, tb)
    t_hi = np.maximum(ta, tb)
    zero = dirs == 0.0
    inside = (origins >= lo) & (origins < hi)
    t_lo[zero] = np.where(inside[zero], -np.inf, np.inf)
    t_hi[zero] = np.where(inside[zero], np.inf, -np.inf)
    t_in = t_lo.max(axis=1)
    t_out = t_hi.min(axis=1)
    valid = (t_in < t_out) & (t_in > 0)
    return valid, t_in, t_out


def render_views(world: SyntheticWorld, cameras: list[CameraModel],
                 frame: int) -> list[tuple[np.ndarray, SemanticMask]]:
    """Exact per-pixel depth and class for each camera at one frame.

    Pixels that hit nothing get depth 0 (invalid) and the unlabeled class.
    """
    spec = world.static.spec
    occ = world.static.occupancy(world.classes.empty_id)
    out = []
    for cam in cameras:
        u, v = cam.pixel_grid()
        dirs = cam.pixel_directions(u, v)
        origins = np.broadcast_to(cam.center, dirs.shape)
        hit, cell, t_in, t_out = traversal.first_occupied(origins, dirs, spec, occ)

        best_t = np.where(hit, t_in, np.inf)
        # Grid hits: depth at the chord midpoint of the hit cell.
        depth_t = np.where(hit, 0.5 * (t_in + t_out), np.inf)
        cls = np.full(len(u), world.classes.unlabeled_id, dtype=np.int16)
        cls[hit] = world.static.labels[cell[hit, 0], cell[hit, 1], cell[hit, 2]]

        norm = np.linalg.norm(dirs, axis=1)
        for actor in world.actors:
            c = actor.center_at(frame)
            valid, a_in, a_out = _box_intersect(origins, dirs, c - actor.extents / 2, c + actor.extents / 2)
            closer = valid & (a_in < best_t)
            if not closer.any():
                continue
            best_t[closer] = a_in[closer]
            # Half a cell behind the entry face, clipped to the chord.
            shell = np.minimum(a_out[closer] - a_in[closer], spec.resolution / norm[closer])
            depth_t[closer] = a_in[closer] + 0.5 * shell
            cls[closer] = actor.class_id

        got = np.isfinite(depth_t)
        depth = np.zeros((cam.height, cam.width), dtype=np.float64)
        depth[v[got], u[got]] = depth_t[got]  # t is the z-depth: dirs have unit camera-z
        classes_img = np.full((cam.height, cam.width), world.classes.unlabeled_id, dtype=np.int16)
        classes_img[v, u] = cls
        logits = np.where(classes_img != world.classes.unlabeled_id, 1.0, 0.0).astype(np.float32)
        out.append((depth, SemanticMask(classes=classes_img, logits=logits)))
    return out


def corrupt_depth(depth: np.ndarray, outlier_fraction: float, magnitude: float,
                  seed: int) -> np.ndarray:
    """Perturb a seeded random subset of valid pixels by +/- magnitude meters.

    Exactly floor(fraction * n_valid) pixels change; the rest are untouched.
    """
    if not (0.0 <= outlier_fraction <= 1.0):
        raise ValidationError(f"outlier fraction must be in [0, 1], got {outlier_fraction}")
    out = np.array(depth, dtype=np.float64, copy=True)
    valid = np.isfinite(out) & (out > 0)
    n_valid = int(valid.sum())
    k = int(np.floor(outlier_fraction * n_valid))
    if k == 0 or magnitude == 0.0:
        return out
    rng = _rng(seed)
    flat_idx = np.nonzero(valid.ravel())[0]
    chosen = rng.choice(len(flat_idx), size=k, replace=False)
    signs = rng.choice(np.array([-1.0, 1.0]), size=k)
    flat = out.ravel()
    flat[flat_idx[chosen]] += signs * magnitude
    return flat.reshape(out.shape)


# ---------------------------------------------------------------------------
# Whole-sequence synthesis
# ---------------------------------------------------------------------------

def ego_pose_at(spec: ScenarioSpec, frame: int) -> FramePose:
    t = np.asarray(spec.ego_start) + frame * np.asarray(spec.ego_step)
    pose = np.eye(4)
    pose[:3, 3] = t
    return FramePose(ego_to_world=pose, timestamp_us=frame * 500_000)


def _mount_to_ego(yaw: float, lateral: float, pitch: float) -> np.ndarray:
    """Camera mount: optical axis along ego +x, yawed about +z, pitched down."""
    # Camera axes (x right, y down, z forward) expressed in the ego frame.
    cam_axes = np.eye(4)
    cam_axes[:3, :3] = np.array([
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
    ])
    c, s = np.cos(pitch), np.sin(pitch)
    pitch_down = np.eye(4)
    pitch_down[:3, :3] = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return yaw_pose(yaw, (0.0, lateral, 0.0)) @ pitch_down @ cam_axes


def cameras_at(spec: ScenarioSpec, frame: int) -> list[CameraModel]:
    """World-frame camera models for one frame of the ego trajectory."""
    f = spec.cam_width / (2.0 * np.tan(np.radians(spec.cam_fov_deg) / 2.0))
    k = np.array([
        [f, 0.0, spec.cam_width / 2.0],
        [0.0, f, spec.cam_height / 2.0],
        [0.0, 0.0, 1.0],
    ])
    ego = ego_pose_at(spec, frame).ego_to_world
    pitch = np.radians(spec.cam_pitch_deg)
    return [
        CameraModel(intrinsics=k, cam_to_world=ego @ _mount_to_ego(yaw, lat, pitch),
                    width=spec.cam_width, height=spec.cam_height)
        for yaw, lat in spec.cam_mounts
    ]


def ground_truth_grid(world: SyntheticWorld, ego: FramePose, grid: GridSpec,
                      frame: int) -> VoxelGrid:
    """Rasterize the world into an ego-frame grid by cell-center sampling.

    Actor boxes override the static label where a cell center falls inside.
    """
    ii = np.indices(grid.dims).reshape(3, -1).T
    centers_ego = grid.origin + (ii + 0.5) * grid.resolution
    centers_world = transform_points(ego.ego_to_world, centers_ego)

    labels = np.full(len(centers_world), world.classes.empty_id, dtype=np.uint8)
    sidx = world.static.spec.point_indices(centers_world)
    inb = world.static.spec.in_bounds(sidx)
    labels[inb] = world.static.labels[sidx[inb, 0], sidx[inb, 1], sidx[inb, 2]]
    for actor in world.actors:
        c = actor.center_at(frame)
        inside = np.all(np.abs(centers_world - c) <= actor.extents / 2, axis=1)
        labels[inside] = actor.class_id
    return VoxelGrid(spec=grid, labels=labels.reshape(grid.dims))


def synthesize_sequence(spec: ScenarioSpec, seed: int, out_dir: Path,
                        label_grid: GridSpec | None = None,
                        corrupt_fraction: float = 0.0,
                        corrupt_magnitude: float = 0.0) -> tuple[SyntheticWorld, SequenceManifest, Path]:
    """Build a world, render every frame, and write a complete sequence.

    Produces depth/mask rasters and a manifest under ``out_dir``; when a
    ``label_grid`` is given, per-frame ground-truth label grids are written to
    gt/frame_NNN.vxgr as well.  Returns (world, manifest, manifest path).
    """
    out_dir = Path(out_dir)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    world = build_world(spec, seed)

    frames = []
    for t in range(spec.num_frames):
        cams = cameras_at(spec, t)
        views = render_views(world, cams, t)
        records = []
        for ci, (cam, (depth, mask)) in enumerate(zip(cams, views)):
            if corrupt_fraction > 0:
                depth = corrupt_depth(depth, corrupt_fraction, corrupt_magnitude,
                                      seed=seed + 1000 * (t + 1) + ci)
            depth_path = out_dir / "frames" / f"f{t:03d}_c{ci}.vxdp"
            mask_path = out_dir / "frames" / f"f{t:03d}_c{ci}.vxsm"
            formats.write_depth(depth_path, depth)
            formats.write_semantic_mask(mask_path, mask)
            records.append(CameraRecord(camera=cam, depth_path=depth_path, mask_path=mask_path))
        frames.append(Frame(pose=ego_pose_at(spec, t), cameras=tuple(records)))

    manifest = SequenceManifest(sequence_id=f"synth-{seed}", frames=tuple(frames))
    manifest_path = out_dir / "manifest.json"
    with open(manifest_path, "w") as fh:
        json.dump(manifest_to_json(manifest, out_dir), fh, indent=2)
    if label_grid is not None:
        write_ground_truth(world, spec, label_grid, out_dir)
    return world, manifest, manifest_path


def write_ground_truth(world: SyntheticWorld, spec: ScenarioSpec, grid: GridSpec,
                       out_dir: Path) -> list[Path]:
    gt_dir = Path(out_dir) / "gt"
    gt_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in range(spec.num_frames):
        gt = ground_truth_grid(world, ego_pose_at(spec, t), grid, t)
        path = gt_dir / f"frame_{t:03d}.vxgr"
        formats.write_grid(path, gt)
        paths.append(path)
    return paths
