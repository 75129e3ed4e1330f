import numpy as np
import pytest

from voxlab import formats
from voxlab.errors import FormatError, ValidationError
from voxlab.masks import DetectionMask, SemanticMask
from voxlab.scene import GridSpec, default_class_table
from voxlab.traversal import FREE_VISIBLE
from voxlab.unproject import LabeledPointCloud
from voxlab.voxelize import VisibilityGrid, VoxelGrid


def test_depth_roundtrip(tmp_path):
    depth = np.random.default_rng(0).uniform(0, 50, size=(12, 17)).astype(np.float32)
    path = tmp_path / "d.vxdp"
    formats.write_depth(path, depth)
    again = formats.read_depth(path)
    assert np.array_equal(again, depth.astype(np.float64))
    assert formats.peek_raster_size(path) == (17, 12)


def test_semantic_mask_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    mask = SemanticMask(classes=rng.integers(0, 17, size=(9, 11)).astype(np.int16),
                        logits=rng.uniform(0, 1, size=(9, 11)).astype(np.float32))
    path = tmp_path / "m.vxsm"
    formats.write_semantic_mask(path, mask)
    again = formats.read_semantic_mask(path)
    assert np.array_equal(again.classes, mask.classes)
    assert np.array_equal(again.logits, mask.logits)


def test_raster_bad_magic(tmp_path):
    path = tmp_path / "bad.vxdp"
    path.write_bytes(b"NOPE" + b"\x00" * 12)
    with pytest.raises(FormatError, match="bad magic"):
        formats.read_depth(path)


def test_raster_truncated(tmp_path):
    depth = np.ones((4, 4), dtype=np.float32)
    path = tmp_path / "t.vxdp"
    formats.write_depth(path, depth)
    data = path.read_bytes()
    path.write_bytes(data[:-8])
    with pytest.raises(FormatError, match="truncated"):
        formats.read_depth(path)


def test_detections_roundtrip(tmp_path):
    rng = np.random.default_rng(2)
    dets = [
        DetectionMask(class_id=3, logit=0.875, mask=rng.random((6, 8)) < 0.4),
        DetectionMask(class_id=-1, logit=0.99, mask=np.ones((6, 8), dtype=bool)),
        DetectionMask(class_id=0, logit=0.2000000001, mask=np.zeros((6, 8), dtype=bool)),
    ]
    path = tmp_path / "d.vxdt"
    formats.write_detections(path, dets, width=8, height=6)
    again, w, h = formats.read_detections(path)
    assert (w, h) == (8, 6)
    assert len(again) == 3
    for a, b in zip(again, dets):
        assert a.class_id == b.class_id
        assert a.logit == b.logit  # repr round-trip is exact
        assert np.array_equal(a.mask, b.mask)


def test_detections_reject_wrong_shape(tmp_path):
    d = DetectionMask(class_id=1, logit=0.5, mask=np.ones((2, 2), dtype=bool))
    with pytest.raises(ValidationError):
        formats.write_detections(tmp_path / "x.vxdt", [d], width=3, height=2)


def test_rle_all_zero_all_one():
    zero = np.zeros((3, 4), dtype=bool)
    one = np.ones((3, 4), dtype=bool)
    assert np.array_equal(formats._rle_decode(formats._rle_encode(zero), 12).reshape(3, 4), zero)
    assert np.array_equal(formats._rle_decode(formats._rle_encode(one), 12).reshape(3, 4), one)


def _grid_pair(seed=0):
    rng = np.random.default_rng(seed)
    spec = GridSpec(np.array([-2.0, -2.0, -1.0]), 0.5, (6, 5, 4))
    labels = rng.integers(0, 17, size=spec.dims).astype(np.uint8)
    state = rng.integers(0, 3, size=spec.dims).astype(np.uint8)
    return VoxelGrid(spec=spec, labels=labels), VisibilityGrid(spec=spec, state=state)


def test_grid_roundtrip_byte_exact(tmp_path):
    grid, vis = _grid_pair()
    p1 = tmp_path / "a.vxgr"
    p2 = tmp_path / "b.vxgr"
    formats.write_grid(p1, grid, vis)
    g2, v2 = formats.read_grid(p1)
    assert np.array_equal(g2.labels, grid.labels)
    assert np.array_equal(v2.state, vis.state)
    assert g2.spec.resolution == grid.spec.resolution
    assert np.array_equal(g2.spec.origin, grid.spec.origin)
    formats.write_grid(p2, g2, v2)
    assert p1.read_bytes() == p2.read_bytes()


def test_grid_without_visibility(tmp_path):
    grid, _ = _grid_pair(1)
    path = tmp_path / "g.vxgr"
    formats.write_grid(path, grid)
    g2, v2 = formats.read_grid(path)
    assert v2 is None
    assert np.array_equal(g2.labels, grid.labels)


def test_grid_bad_magic(tmp_path):
    path = tmp_path / "g.vxgr"
    path.write_bytes(b"XXXX" + b"\x00" * 28)
    with pytest.raises(FormatError, match="bad magic"):
        formats.read_grid(path)


def test_grid_unsupported_version(tmp_path):
    grid, vis = _grid_pair(2)
    path = tmp_path / "g.vxgr"
    formats.write_grid(path, grid, vis)
    data = bytearray(path.read_bytes())
    data[4] = formats.GRID_VERSION + 1
    path.write_bytes(bytes(data))
    with pytest.raises(FormatError, match="unsupported version"):
        formats.read_grid(path)


def test_grid_truncated(tmp_path):
    grid, vis = _grid_pair(3)
    path = tmp_path / "g.vxgr"
    formats.write_grid(path, grid, vis)
    path.write_bytes(path.read_bytes()[:40])
    with pytest.raises(FormatError, match="truncated"):
        formats.read_grid(path)


def test_grid_rejects_off_lattice_origin(tmp_path):
    spec = GridSpec(np.array([0.00005, 0, 0]), 0.4, (2, 2, 2))
    grid = VoxelGrid(spec=spec, labels=np.zeros(spec.dims, dtype=np.uint8))
    with pytest.raises(ValidationError, match="millimeter"):
        formats.write_grid(tmp_path / "g.vxgr", grid)


def test_cell_stats_roundtrip(tmp_path):
    rows = np.array([[0, 1, 2, 5, 3, 3], [-2, 0, 7, 0, 9, 9]], dtype=np.int64)
    path = tmp_path / "s.vxcs"
    formats.write_cell_stats(path, rows)
    assert np.array_equal(formats.read_cell_stats(path), rows)


def test_ply_empty_grid(tmp_path):
    classes = default_class_table()
    spec = GridSpec(np.zeros(3), 1.0, (2, 2, 2))
    grid = VoxelGrid(spec=spec, labels=np.full(spec.dims, classes.empty_id, dtype=np.uint8))
    path = tmp_path / "g.ply"
    formats.export_ply(grid, path, classes)
    text = path.read_text()
    assert "element vertex 0" in text
    assert text.rstrip().endswith("end_header")


def test_ply_single_cell_center(tmp_path):
    classes = default_class_table()
    spec = GridSpec(np.zeros(3), 1.0, (2, 2, 2))
    labels = np.full(spec.dims, classes.empty_id, dtype=np.uint8)
    labels[0, 0, 0] = 3
    path = tmp_path / "g.ply"
    formats.export_ply(VoxelGrid(spec=spec, labels=labels), path, classes)
    lines = path.read_text().splitlines()
    assert "element vertex 1" in lines
    vertex = lines[lines.index("end_header") + 1]
    assert vertex.startswith("0.500000 0.500000 0.500000")


def test_ply_cloud_order_preserved(tmp_path):
    classes = default_class_table()
    pts = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0], [0.5, 0.25, 0.125]])
    cloud = LabeledPointCloud(
        positions=pts,
        class_ids=np.array([1, 2, 3], dtype=np.int16),
        frame_indices=np.zeros(3, dtype=np.int32),
        camera_indices=np.zeros(3, dtype=np.int16),
        pixels=np.zeros((3, 2), dtype=np.int32),
    )
    path = tmp_path / "c.ply"
    formats.export_ply(cloud, path, classes)
    lines = path.read_text().splitlines()
    body = lines[lines.index("end_header") + 1:]
    assert len(body) == 3
    assert body[0].startswith("1.000000 2.000000 3.000000")
    assert body[2].startswith("0.500000 0.250000 0.125000")


def test_export_ply_rejects_unknown(tmp_path):
    with pytest.raises(ValidationError):
        formats.export_ply(42, tmp_path / "x.ply", default_class_table())
