"""Binary interchange formats and the PLY debug export.

All multi-byte fields are little-endian.  Exact layouts are documented in
docs/FORMATS.md; the constants here are the single source of truth.

Raster files (depth maps, semantic masks) share one 16-byte header:
magic(4s) version(u16) reserved(u16) width(u32) height(u32).

Grid files carry a 32-byte header with the voxel geometry stored in integer
millimeters, which keeps write-read round trips byte-exact; grids must
therefore sit on a millimeter lattice.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from voxlab.errors import FormatError, ValidationError
from voxlab.masks import DetectionMask, SemanticMask
from voxlab.scene import ClassTable, GridSpec
from voxlab.unproject import LabeledPointCloud
from voxlab.voxelize import VisibilityGrid, VoxelGrid

_RASTER_HEADER = struct.Struct("<4sHHII")
DEPTH_MAGIC = b"VXDP"
MASK_MAGIC = b"VXSM"
RASTER_VERSION = 1

_GRID_HEADER = struct.Struct("<4sBB3HI3i4x")
GRID_MAGIC = b"VXGR"
GRID_VERSION = 1
_FLAG_HAS_VISIBILITY = 1

_CELLSTATS_HEADER = struct.Struct("<4sIQ")
CELLSTATS_MAGIC = b"VXCS"

DETECTION_MAGIC = "VXDT"


def _read_exact(fh, n: int, what: str) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise FormatError(f"truncated file: expected {n} bytes for {what}, got {len(data)}")
    return data


# ---------------------------------------------------------------------------
# Raster files (depth, semantic mask)
# ---------------------------------------------------------------------------

def _write_raster_header(fh, magic: bytes, width: int, height: int) -> None:
    fh.write(_RASTER_HEADER.pack(magic, RASTER_VERSION, 0, width, height))


def _read_raster_header(fh, expected_magic: bytes, path) -> tuple[int, int]:
    magic, version, _, width, height = _RASTER_HEADER.unpack(_read_exact(fh, _RASTER_HEADER.size, "header"))
    if magic != expected_magic:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {expected_magic!r}")
    if version != RASTER_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    return width, height


def peek_raster_size(path) -> tuple[int, int]:
    """(width, height) from any raster header without reading the payload."""
    with open(path, "rb") as fh:
        magic, version, _, width, height = _RASTER_HEADER.unpack(
            _read_exact(fh, _RASTER_HEADER.size, "header")
        )
    if magic not in (DEPTH_MAGIC, MASK_MAGIC):
        raise FormatError(f"{path}: bad magic {magic!r}")
    return width, height


def write_depth(path, depth: np.ndarray) -> None:
    depth = np.asarray(depth, dtype=np.float32)
    with open(path, "wb") as fh:
        _write_raster_header(fh, DEPTH_MAGIC, depth.shape[1], depth.shape[0])
        fh.write(np.ascontiguousarray(depth).astype("<f4").tobytes())


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as fh:
        width, height = _read_raster_header(fh, DEPTH_MAGIC, path)
        data = _read_exact(fh, width * height * 4, "depth payload")
    return np.frombuffer(data, dtype="<f4").reshape(height, width).astype(np.float64)


def write_semantic_mask(path, mask: SemanticMask) -> None:
    h, w = mask.classes.shape
    with open(path, "wb") as fh:
        _write_raster_header(fh, MASK_MAGIC, w, h)
        fh.write(np.ascontiguousarray(mask.classes.astype(np.uint8)).tobytes())
        fh.write(np.ascontiguousarray(mask.logits.astype("<f4")).tobytes())


def read_semantic_mask(path) -> SemanticMask:
    with open(path, "rb") as fh:
        width, height = _read_raster_header(fh, MASK_MAGIC, path)
        cls = _read_exact(fh, width * height, "class payload")
        logit = _read_exact(fh, width * height * 4, "logit payload")
    return SemanticMask(
        classes=np.frombuffer(cls, dtype=np.uint8).reshape(height, width).astype(np.int16),
        logits=np.frombuffer(logit, dtype="<f4").reshape(height, width).copy(),
    )


# ---------------------------------------------------------------------------
# Detection sets (text header + binary run-length masks)
# ---------------------------------------------------------------------------

def _rle_encode(mask: np.ndarray) -> np.ndarray:
    """Run lengths of the flattened mask, alternating zero/one, zeros first."""
    flat = np.asarray(mask, dtype=bool).ravel()
    if flat.size == 0:
        return np.zeros(0, dtype=np.uint32)
    edges = np.nonzero(flat[1:] != flat[:-1])[0] + 1
    bounds = np.concatenate([[0], edges, [flat.size]])
    runs = np.diff(bounds)
    if flat[0]:
        runs = np.concatenate([[0], runs])
    return runs.astype(np.uint32)


def _rle_decode(runs: np.ndarray, size: int) -> np.ndarray:
    if int(runs.sum()) != size:
        raise FormatError(f"run lengths sum to {int(runs.sum())}, expected {size}")
    values = np.zeros(len(runs), dtype=bool)
    values[1::2] = True
    return np.repeat(values, runs)


def write_detections(path, dets: list[DetectionMask], width: int, height: int) -> None:
    for d in dets:
        if d.mask.shape != (height, width):
            raise ValidationError(f"detection mask is {d.mask.shape}, file declares {(height, width)}")
    encoded = [_rle_encode(d.mask) for d in dets]
    with open(path, "wb") as fh:
        header = [f"{DETECTION_MAGIC} 1 {width} {height} {len(dets)}"]
        for d, runs in zip(dets, encoded):
            header.append(f"{d.class_id} {d.logit!r} {len(runs)}")
        header.append("END\n")
        fh.write("\n".join(header).encode("ascii"))
        for runs in encoded:
            fh.write(runs.astype("<u4").tobytes())


def read_detections(path) -> tuple[list[DetectionMask], int, int]:
    """Returns (detections, width, height); background entries come through as-is."""
    with open(path, "rb") as fh:
        first = fh.readline().decode("ascii", errors="replace").split()
        if len(first) != 5 or first[0] != DETECTION_MAGIC:
            raise FormatError(f"{path}: not a detection set file")
        if first[1] != "1":
            raise FormatError(f"{path}: unsupported version {first[1]}")
        width, height, count = int(first[2]), int(first[3]), int(first[4])
        entries = []
        for _ in range(count):
            parts = fh.readline().decode("ascii").split()
            if len(parts) != 3:
                raise FormatError(f"{path}: malformed detection header line")
            entries.append((int(parts[0]), float(parts[1]), int(parts[2])))
        if fh.readline().strip() != b"END":
            raise FormatError(f"{path}: missing END sentinel")
        dets = []
        for class_id, logit, n_runs in entries:
            raw = _read_exact(fh, n_runs * 4, "run lengths")
            runs = np.frombuffer(raw, dtype="<u4")
            mask = _rle_decode(runs, width * height).reshape(height, width)
            dets.append(DetectionMask(class_id=class_id, logit=logit, mask=mask))
    return dets, width, height


# ---------------------------------------------------------------------------
# Voxel grid files
# ---------------------------------------------------------------------------

def _mm(value: float, what: str) -> int:
    mm = value * 1000.0
    rounded = round(mm)
    if abs(mm - rounded) > 1e-6:
        raise ValidationError(f"{what} = {value} m is not on the millimeter lattice required by the grid format")
    return int(rounded)


def write_grid(path, grid: VoxelGrid, visibility: VisibilityGrid | None = None) -> None:
    spec = grid.spec
    if visibility is not None and visibility.spec.dims != spec.dims:
        raise ValidationError("visibility grid dims do not match the label grid")
    flags = _FLAG_HAS_VISIBILITY if visibility is not None else 0
    header = _GRID_HEADER.pack(
        GRID_MAGIC, GRID_VERSION, flags,
        spec.dims[0], spec.dims[1], spec.dims[2],
        _mm(spec.resolution, "resolution"),
        _mm(spec.origin[0], "origin.x"),
        _mm(spec.origin[1], "origin.y"),
        _mm(spec.origin[2], "origin.z"),
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(grid.labels.astype(np.uint8)).tobytes())
        if visibility is not None:
            fh.write(np.ascontiguousarray(visibility.state.astype(np.uint8)).tobytes())


def read_grid(path) -> tuple[VoxelGrid, VisibilityGrid | None]:
    with open(path, "rb") as fh:
        raw = _read_exact(fh, _GRID_HEADER.size, "grid header")
        magic, version, flags, nx, ny, nz, res_mm, ox, oy, oz = _GRID_HEADER.unpack(raw)
        if magic != GRID_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != GRID_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        spec = GridSpec(
            origin=np.array([ox, oy, oz], dtype=np.float64) / 1000.0,
            resolution=res_mm / 1000.0,
            dims=(nx, ny, nz),
        )
        n = spec.num_cells
        labels = np.frombuffer(_read_exact(fh, n, "labels"), dtype=np.uint8).reshape(spec.dims).copy()
        vis = None
        if flags & _FLAG_HAS_VISIBILITY:
            state = np.frombuffer(_read_exact(fh, n, "visibility"), dtype=np.uint8).reshape(spec.dims).copy()
            vis = VisibilityGrid(spec=spec, state=state)
    return VoxelGrid(spec=spec, labels=labels), vis


# ---------------------------------------------------------------------------
# Cell statistics debug dump
# ---------------------------------------------------------------------------

def write_cell_stats(path, rows: np.ndarray) -> None:
    """Rows: (n, 6) int64 of (ix, iy, iz, pass, hit, points)."""
    with open(path, "wb") as fh:
        fh.write(_CELLSTATS_HEADER.pack(CELLSTATS_MAGIC, 1, len(rows)))
        packed = np.zeros((len(rows), 6), dtype="<i4")
        packed[:] = rows
        fh.write(packed.tobytes())


def read_cell_stats(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic, version, count = _CELLSTATS_HEADER.unpack(
            _read_exact(fh, _CELLSTATS_HEADER.size, "header")
        )
        if magic != CELLSTATS_MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        if version != 1:
            raise FormatError(f"{path}: unsupported version {version}")
        raw = _read_exact(fh, count * 24, "rows")
    return np.frombuffer(raw, dtype="<i4").reshape(count, 6).astype(np.int64)


# ---------------------------------------------------------------------------
# PLY export
# ---------------------------------------------------------------------------

# Fixed palette; classes index it modulo its length.
_PALETTE = np.array([
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
    (210, 245, 60), (250, 190, 190), (0, 128, 128), (170, 110, 40),
    (128, 0, 0), (128, 128, 0), (0, 0, 128), (128, 128, 128),
    (255, 255, 255),
], dtype=np.uint8)


def class_colors(class_ids: np.ndarray) -> np.ndarray:
    return _PALETTE[np.asarray(class_ids, dtype=np.int64) % len(_PALETTE)]


def _write_ply(path, positions: np.ndarray, colors: np.ndarray) -> None:
    with open(path, "w") as fh:
        fh.write("ply\nformat ascii 1.0\n")
        fh.write(f"element vertex {len(positions)}\n")
        fh.write("property float x\nproperty float y\nproperty float z\n")
        fh.write("property uchar red\nproperty uchar green\nproperty uchar blue\n")
        fh.write("end_header\n")
        for (x, y, z), (r, g, b) in zip(positions, colors):
            fh.write(f"{x:.6f} {y:.6f} {z:.6f} {r} {g} {b}\n")


def export_ply(obj, path, classes: ClassTable) -> None:
    """Write a class-colored ASCII PLY from a point cloud or a voxel grid.

    Grids contribute one vertex per occupied cell, placed at the cell center.
    """
    if isinstance(obj, LabeledPointCloud):
        _write_ply(path, obj.positions, class_colors(obj.class_ids))
    elif isinstance(obj, VoxelGrid):
        occupied = np.argwhere(obj.labels != classes.empty_id)
        centers = obj.spec.origin + (occupied + 0.5) * obj.spec.resolution
        labels = obj.labels[occupied[:, 0], occupied[:, 1], occupied[:, 2]]
        _write_ply(path, centers, class_colors(labels))
    else:
        raise ValidationError(f"cannot export object of type {type(obj).__name__} to PLY")
