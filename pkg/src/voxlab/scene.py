"""Coordinate frames, camera models, grid geometry, class vocabulary, and
sequence manifests.

Conventions used throughout the package:

- Camera frame: x-right, y-down, z-forward (pinhole); depth is the camera-z
  coordinate of a point, not the euclidean ray length.
- World frame: one global frame per sequence.
- Output grids live in the ego frame of their own frame index.
- Voxel indexing: ``index = floor((p - origin) / resolution)``. A point exactly
  on a cell's max boundary belongs to the next cell; the grid max corner is
  exclusive.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from voxlab.errors import ValidationError

# Tolerance for the orthonormality / unit-determinant checks on rotations.
RIGID_ATOL = 1e-6

# Relative slack (in index units) when deciding whether a coordinate sits on a
# voxel boundary.  Keeps floor((40-(-40))/0.4) == 200 despite 0.4 not being
# representable in binary.
_BOUNDARY_SNAP = 1e-9


def _as_matrix(m, shape, name: str) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {a.shape}")
    return a


def check_rigid(pose: np.ndarray, name: str = "pose") -> np.ndarray:
    """Validate a 4x4 rigid transform (orthonormal rotation, (0,0,0,1) bottom row)."""
    pose = _as_matrix(pose, (4, 4), name)
    if not np.allclose(pose[3], (0.0, 0.0, 0.0, 1.0), atol=1e-9):
        raise ValidationError(f"non-rigid pose: {name} bottom row is {pose[3]}, expected (0,0,0,1)")
    r = pose[:3, :3]
    if not np.allclose(r @ r.T, np.eye(3), atol=RIGID_ATOL):
        raise ValidationError(f"non-rigid pose: {name} rotation block is not orthonormal")
    if abs(np.linalg.det(r) - 1.0) > RIGID_ATOL:
        raise ValidationError(f"non-rigid pose: {name} rotation determinant is {np.linalg.det(r):.6g}")
    return pose


def transform_point(pose: np.ndarray, p) -> np.ndarray:
    """Apply a rigid transform to a single 3-vector: returns R @ p + t."""
    p = np.asarray(p, dtype=np.float64)
    return pose[:3, :3] @ p + pose[:3, 3]


def transform_points(pose: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Apply a rigid transform to an (N, 3) array of points."""
    return pts @ pose[:3, :3].T + pose[:3, 3]


def invert_pose(pose: np.ndarray) -> np.ndarray:
    """Invert a rigid transform without a general matrix inverse."""
    out = np.eye(4)
    r = pose[:3, :3]
    out[:3, :3] = r.T
    out[:3, 3] = -r.T @ pose[:3, 3]
    return out


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: 3x3 intrinsics plus a camera-to-world rigid transform."""

    intrinsics: np.ndarray
    cam_to_world: np.ndarray
    width: int
    height: int

    def __post_init__(self):
        k = _as_matrix(self.intrinsics, (3, 3), "intrinsics")
        if abs(k[0, 0]) < 1e-12 or abs(k[1, 1]) < 1e-12:
            raise ValidationError("intrinsics has a zero focal term (not invertible)")
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "cam_to_world", check_rigid(self.cam_to_world, "cam_to_world"))
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("camera dimensions must be positive")

    @property
    def center(self) -> np.ndarray:
        """Camera position in the world frame."""
        return self.cam_to_world[:3, 3]

    def pixel_grid(self, stride: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Integer (u, v) coordinates of every sampled pixel, row-major."""
        us = np.arange(0, self.width, stride)
        vs = np.arange(0, self.height, stride)
        uu, vv = np.meshgrid(us, vs)
        return uu.ravel(), vv.ravel()

    def pixel_directions(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """World-frame ray directions K^-1 (u, v, 1), rotated by the pose.

        Directions are deliberately not normalized: with the camera-frame z
        component equal to 1, the ray parameter equals the z-depth.
        """
        k_inv = np.linalg.inv(self.intrinsics)
        pix = np.stack([np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64), np.ones(np.shape(u))], axis=-1)
        cam_dirs = pix @ k_inv.T
        return cam_dirs @ self.cam_to_world[:3, :3].T

    def project(self, p_world: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project world points to (u, v, depth). Inverse of unprojection."""
        p = np.atleast_2d(p_world)
        cam = transform_points(invert_pose(self.cam_to_world), p)
        depth = cam[:, 2]
        uv = (cam / depth[:, None]) @ self.intrinsics.T
        return uv[:, 0], uv[:, 1], depth


@dataclass(frozen=True)
class FramePose:
    """Ego vehicle pose for one frame."""

    ego_to_world: np.ndarray
    timestamp_us: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ego_to_world", check_rigid(self.ego_to_world, "ego_to_world"))


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned voxel grid: min corner, cell size, and cell counts."""

    origin: np.ndarray
    resolution: float
    dims: tuple[int, int, int]

    def __post_init__(self):
        origin = np.asarray(self.origin, dtype=np.float64)
        if origin.shape != (3,):
            raise ValidationError("grid origin must be a 3-vector")
        object.__setattr__(self, "origin", origin)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        if self.resolution <= 0:
            raise ValidationError("grid resolution must be positive")
        if any(d <= 0 for d in self.dims):
            raise ValidationError("grid dims must be positive")

    @staticmethod
    def from_bounds(min_corner, max_corner, resolution: float) -> "GridSpec":
        """Build a grid from metric bounds; extents must be whole multiples of the resolution."""
        lo = np.asarray(min_corner, dtype=np.float64)
        hi = np.asarray(max_corner, dtype=np.float64)
        counts = (hi - lo) / resolution
        dims = np.round(counts).astype(int)
        if not np.allclose(counts, dims, atol=1e-6):
            raise ValidationError(f"bounds {lo}..{hi} are not a whole number of {resolution} m cells")
        return GridSpec(lo, float(resolution), tuple(dims))

    @staticmethod
    def default() -> "GridSpec":
        """The standard driving grid: [-40, 40] m in x/y, [-1, 5.4] m in z, 0.4 m cells."""
        return GridSpec.from_bounds((-40.0, -40.0, -1.0), (40.0, 40.0, 5.4), 0.4)

    @property
    def max_corner(self) -> np.ndarray:
        return self.origin + np.asarray(self.dims) * self.resolution

    @property
    def num_cells(self) -> int:
        return self.dims[0] * self.dims[1] * self.dims[2]

    def voxel_center(self, index) -> np.ndarray:
        return self.origin + (np.asarray(index, dtype=np.float64) + 0.5) * self.resolution

    def point_indices(self, pts: np.ndarray) -> np.ndarray:
        """Floor voxel indices for (N, 3) points; may fall outside [0, dims).

        Coordinates within a relative epsilon of a cell's max boundary are
        snapped onto it, so that e.g. 80/0.4 lands in cell 200, not 199.
        """
        q = (np.atleast_2d(pts) - self.origin) / self.resolution
        idx = np.floor(q).astype(np.int64)
        snap = np.abs(q - 1.0) + 1.0  # scale factor ~ max(1, |q|)
        idx[q - (idx + 1) >= -_BOUNDARY_SNAP * snap] += 1
        return idx

    def in_bounds(self, indices: np.ndarray) -> np.ndarray:
        idx = np.atleast_2d(indices)
        return np.all((idx >= 0) & (idx < np.asarray(self.dims)), axis=1)

    def linear_indices(self, indices: np.ndarray) -> np.ndarray:
        """Flatten (N, 3) in-bounds indices to linear offsets, x-major order."""
        idx = np.atleast_2d(indices)
        nx, ny, nz = self.dims
        return (idx[:, 0] * ny + idx[:, 1]) * nz + idx[:, 2]


def world_to_voxel(p, grid: GridSpec):
    """Voxel index of a point, or None when outside the grid."""
    idx = grid.point_indices(np.asarray(p, dtype=np.float64)[None, :])[0]
    if not grid.in_bounds(idx[None, :])[0]:
        return None
    return tuple(int(i) for i in idx)


# ---------------------------------------------------------------------------
# Class vocabulary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassDef:
    id: int
    name: str
    dynamic: bool = False
    priority_tier: int = 1
    prompts: tuple[str, ...] = ()


class ClassTable:
    """Dense class vocabulary with reserved ``unlabeled`` and ``empty`` entries.

    ``priority_tier`` steers the voxel vote: within a cell, points of the
    lowest tier present outvote everything in higher tiers.  ``dynamic``
    entries are routed into per-frame clouds instead of the accumulated
    static cloud.
    """

    def __init__(self, entries: list[ClassDef]):
        ids = sorted(e.id for e in entries)
        if ids != list(range(len(entries))):
            raise ValidationError("class ids must be dense 0..N-1")
        self.entries = tuple(sorted(entries, key=lambda e: e.id))
        by_name = {}
        for e in self.entries:
            if e.name in by_name:
                raise ValidationError(f"duplicate class name {e.name!r}")
            by_name[e.name] = e
        for reserved in ("empty", "unlabeled"):
            if reserved not in by_name:
                raise ValidationError(f"class table must reserve a {reserved!r} entry")
            if by_name[reserved].dynamic:
                raise ValidationError(f"reserved class {reserved!r} cannot be dynamic")
        self._by_name = by_name
        self.empty_id = by_name["empty"].id
        self.unlabeled_id = by_name["unlabeled"].id

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, class_id: int) -> ClassDef:
        return self.entries[class_id]

    def by_name(self, name: str) -> ClassDef:
        return self._by_name[name]

    def id_of(self, name: str) -> int:
        return self._by_name[name].id

    @property
    def dynamic_ids(self) -> frozenset[int]:
        return frozenset(e.id for e in self.entries if e.dynamic)

    @property
    def semantic_ids(self) -> tuple[int, ...]:
        """All ids except the reserved empty/unlabeled pair."""
        return tuple(e.id for e in self.entries if e.id not in (self.empty_id, self.unlabeled_id))

    def tier_array(self) -> np.ndarray:
        return np.array([e.priority_tier for e in self.entries], dtype=np.int64)

    def to_json(self) -> list[dict]:
        return [
            {
                "id": e.id,
                "name": e.name,
                "dynamic": e.dynamic,
                "priority_tier": e.priority_tier,
                "prompts": list(e.prompts),
            }
            for e in self.entries
        ]

    @staticmethod
    def from_json(data: list[dict]) -> "ClassTable":
        return ClassTable(
            [
                ClassDef(
                    id=int(d["id"]),
                    name=str(d["name"]),
                    dynamic=bool(d.get("dynamic", False)),
                    priority_tier=int(d.get("priority_tier", 1)),
                    prompts=tuple(d.get("prompts", ())),
                )
                for d in data
            ]
        )


# Default driving vocabulary.  Tier 0 marks small/thin object classes that
# would otherwise be drowned out by road/terrain votes near the ground.
_DEFAULT_CLASSES = [
    # name, dynamic, tier, prompts
    ("barrier", False, 0, ("barricade", "barrier")),
    ("bicycle", True, 0, ("bicycle",)),
    ("bus", True, 1, ("bus",)),
    ("car", True, 1, ("car", "sedan", "van")),
    ("construction_vehicle", True, 1, ("excavator", "crane")),
    ("motorcycle", True, 0, ("motorcycle", "scooter")),
    ("pedestrian", True, 0, ("person", "pedestrian")),
    ("traffic_cone", False, 0, ("traffic-cone",)),
    ("trailer", True, 1, ("trailer",)),
    ("truck", True, 1, ("lorry", "truck")),
    ("driveable_surface", False, 1, ("highway", "street", "roadmarking")),
    ("sidewalk", False, 1, ("sidewalk", "walkway")),
    ("terrain", False, 1, ("turf", "grass", "sand")),
    ("manmade", False, 1, ("building", "wall", "fence", "pole", "sign", "light", "bridge", "billboard")),
    ("vegetation", False, 1, ("bush", "plants", "tree")),
    ("unlabeled", False, 9, ()),
    ("empty", False, 9, ()),
]


def default_class_table() -> ClassTable:
    return ClassTable(
        [
            ClassDef(id=i, name=name, dynamic=dyn, priority_tier=tier, prompts=prompts)
            for i, (name, dyn, tier, prompts) in enumerate(_DEFAULT_CLASSES)
        ]
    )


# ---------------------------------------------------------------------------
# Sequence manifest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CameraRecord:
    camera: CameraModel
    depth_path: Path
    mask_path: Path


@dataclass(frozen=True)
class Frame:
    pose: FramePose
    cameras: tuple[CameraRecord, ...]


@dataclass(frozen=True)
class SequenceManifest:
    sequence_id: str
    frames: tuple[Frame, ...] = field(default_factory=tuple)

    @property
    def num_cameras(self) -> int:
        return len(self.frames[0].cameras) if self.frames else 0


def _camera_from_json(rec: dict, base: Path) -> CameraRecord:
    cam = CameraModel(
        intrinsics=rec["intrinsics"],
        cam_to_world=rec["cam_to_world"],
        width=int(rec["width"]),
        height=int(rec["height"]),
    )
    return CameraRecord(
        camera=cam,
        depth_path=(base / rec["depth_path"]).resolve(),
        mask_path=(base / rec["mask_path"]).resolve(),
    )


def validate_manifest(raw: dict, base_dir: Path, check_files: bool = True) -> SequenceManifest:
    """Validate a raw manifest dict into a SequenceManifest.

    Checks, in order: structural fields, pose rigidity, camera-count
    consistency, file existence, and header/dimension agreement between the
    declared camera size and the referenced depth and mask files.  The first
    violation raises :class:`ValidationError` naming the offending frame and
    camera.
    """
    from voxlab import formats  # file-header peeking; deferred to avoid an import cycle

    base = Path(base_dir)
    if "frames" not in raw or not isinstance(raw["frames"], list):
        raise ValidationError("manifest is missing a 'frames' list")
    frames: list[Frame] = []
    cam_count: int | None = None
    for fi, fr in enumerate(raw["frames"]):
        try:
            pose = FramePose(
                ego_to_world=fr["ego_to_world"],
                timestamp_us=int(fr.get("timestamp_us", fi)),
            )
            cams = tuple(_camera_from_json(rec, base) for rec in fr["cameras"])
        except ValidationError as exc:
            raise ValidationError(f"frame {fi}: {exc}") from exc
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"frame {fi}: malformed entry ({exc})") from exc
        if cam_count is None:
            cam_count = len(cams)
        elif len(cams) != cam_count:
            raise ValidationError(
                f"inconsistent camera count: frame {fi} has {len(cams)}, frame 0 has {cam_count}"
            )
        if check_files:
            for ci, rec in enumerate(cams):
                for kind, path in (("depth", rec.depth_path), ("mask", rec.mask_path)):
                    if not path.is_file():
                        raise ValidationError(f"frame {fi} camera {ci}: missing file {path}")
                    w, h = formats.peek_raster_size(path)
                    if (w, h) != (rec.camera.width, rec.camera.height):
                        raise ValidationError(
                            f"frame {fi} camera {ci}: dimension mismatch, {kind} file {path.name} "
                            f"is {w}x{h} but camera declares {rec.camera.width}x{rec.camera.height}"
                        )
        frames.append(Frame(pose=pose, cameras=cams))
    return SequenceManifest(sequence_id=str(raw.get("sequence_id", "sequence")), frames=tuple(frames))


def load_manifest(path: Path, check_files: bool = True) -> SequenceManifest:
    path = Path(path)
    with open(path) as fh:
        raw = json.load(fh)
    return validate_manifest(raw, path.parent, check_files=check_files)


def manifest_to_json(manifest: SequenceManifest, base_dir: Path) -> dict:
    """Serialize a manifest with paths relative to ``base_dir``."""
    base = Path(base_dir).resolve()
    frames = []
    for fr in manifest.frames:
        cams = []
        for rec in fr.cameras:
            cams.append(
                {
                    "intrinsics": rec.camera.intrinsics.tolist(),
                    "cam_to_world": rec.camera.cam_to_world.tolist(),
                    "width": rec.camera.width,
                    "height": rec.camera.height,
                    "depth_path": str(Path(rec.depth_path).resolve().relative_to(base)),
                    "mask_path": str(Path(rec.mask_path).resolve().relative_to(base)),
                }
            )
        frames.append(
            {
                "timestamp_us": fr.pose.timestamp_us,
                "ego_to_world": fr.pose.ego_to_world.tolist(),
                "cameras": cams,
            }
        )
    return {"sequence_id": manifest.sequence_id, "frames": frames}


def yaw_pose(yaw: float, translation=(0.0, 0.0, 0.0)) -> np.ndarray:
    """4x4 transform rotating about +z by ``yaw`` radians, then translating."""
    c, s = math.cos(yaw), math.sin(yaw)
    m = np.eye(4)
    m[:3, :3] = [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]
    m[:3, 3] = translation
    return m
