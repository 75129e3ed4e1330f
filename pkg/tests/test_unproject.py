import numpy as np
import pytest

from voxlab.errors import ValidationError
from voxlab.masks import SemanticMask
from voxlab.scene import CameraModel, yaw_pose
from voxlab.unproject import LabeledPointCloud, split_frame, unproject_pixel


def simple_cam(w=4, h=3, pose=None):
    k = np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1.0]])
    return CameraModel(intrinsics=k, cam_to_world=pose if pose is not None else np.eye(4),
                       width=w, height=h)


def test_unproject_identity_intrinsics():
    # K = I: the camera ray through (u, v) is (u, v, 1) scaled by depth.
    assert np.allclose(unproject_pixel(2, 3, 2.0, simple_cam()), (4, 6, 2))


def test_unproject_translated_camera():
    pose = np.eye(4)
    pose[:3, 3] = (10, 0, 0)
    assert np.allclose(unproject_pixel(0, 0, 5.0, simple_cam(pose=pose)), (10, 0, 5))


def test_unproject_focal_and_yaw():
    # Independent oracle: full 4x4 homogeneous chain evaluated explicitly.
    k = np.array([[500.0, 0, 320], [0, 500.0, 240], [0, 0, 1]])
    pose = yaw_pose(np.pi / 2)
    cam = CameraModel(intrinsics=k, cam_to_world=pose, width=640, height=480)
    got = unproject_pixel(320, 240, 3.0, cam)
    ray = np.linalg.inv(k) @ np.array([320.0, 240.0, 1.0]) * 3.0  # = (0, 0, 3)
    want = (pose @ np.array([*ray, 1.0]))[:3]
    assert np.allclose(got, want, atol=1e-12)
    assert np.allclose(want, (0, 0, 3))  # yaw about z leaves the optical axis alone


def test_unproject_rejects_bad_depth():
    with pytest.raises(ValidationError):
        unproject_pixel(0, 0, 0.0, simple_cam())
    with pytest.raises(ValidationError):
        unproject_pixel(0, 0, float("nan"), simple_cam())


def _frame_inputs(tiny_classes, class_img, depth=None):
    h, w = class_img.shape
    cam = simple_cam(w=w, h=h)
    depth = np.full((h, w), 2.0) if depth is None else depth
    mask = SemanticMask(classes=class_img.astype(np.int16),
                        logits=np.ones((h, w), dtype=np.float32))
    return [cam], [depth], [mask]


def test_split_all_static(tiny_classes):
    cls = np.zeros((3, 4), dtype=np.int16)  # ground everywhere
    static, dynamic = split_frame(0, *_frame_inputs(tiny_classes, cls), tiny_classes)
    assert len(static) == 12 and len(dynamic) == 0


def test_split_routes_dynamic_pixel(tiny_classes):
    cls = np.zeros((3, 4), dtype=np.int16)
    cls[1, 2] = 3  # actor
    static, dynamic = split_frame(0, *_frame_inputs(tiny_classes, cls), tiny_classes)
    assert len(dynamic) == 1
    assert dynamic.class_ids[0] == 3
    assert tuple(dynamic.pixels[0]) == (2, 1)
    assert len(static) == 11


def test_split_all_unlabeled(tiny_classes):
    cls = np.full((3, 4), tiny_classes.unlabeled_id, dtype=np.int16)
    static, dynamic = split_frame(0, *_frame_inputs(tiny_classes, cls), tiny_classes)
    assert len(static) == 0 and len(dynamic) == 0


def test_split_point_count_conservation(tiny_classes):
    rng = np.random.default_rng(3)
    cls = rng.integers(0, 5, size=(6, 7)).astype(np.int16)  # includes unlabeled id 4
    depth = rng.uniform(-1, 5, size=(6, 7))
    depth[0, 0] = np.nan
    static, dynamic = split_frame(0, *_frame_inputs(tiny_classes, cls, depth), tiny_classes)
    valid = np.isfinite(depth) & (depth > 0) & (cls != tiny_classes.unlabeled_id)
    assert len(static) + len(dynamic) == int(valid.sum())


def test_split_invalid_depth_produces_no_point(tiny_classes):
    cls = np.zeros((2, 2), dtype=np.int16)
    depth = np.array([[2.0, 0.0], [-1.0, np.inf]])
    static, dynamic = split_frame(0, *_frame_inputs(tiny_classes, cls, depth), tiny_classes)
    assert len(static) == 1 and len(dynamic) == 0


def test_split_deterministic_order(tiny_classes):
    cls = np.zeros((3, 4), dtype=np.int16)
    static, _ = split_frame(0, *_frame_inputs(tiny_classes, cls), tiny_classes)
    # (camera, v, u) ordering: v-major within the camera
    uv = [tuple(p) for p in static.pixels]
    assert uv == [(u, v) for v in range(3) for u in range(4)]


def test_split_projection_roundtrip(tiny_classes):
    k = np.array([[50.0, 0, 16], [0, 50.0, 12], [0, 0, 1]])
    cam = CameraModel(intrinsics=k, cam_to_world=yaw_pose(0.7, (3, -2, 1)), width=32, height=24)
    rng = np.random.default_rng(5)
    depth = rng.uniform(1.0, 20.0, size=(24, 32))
    cls = np.zeros((24, 32), dtype=np.int16)
    mask = SemanticMask(classes=cls, logits=np.ones((24, 32), dtype=np.float32))
    static, _ = split_frame(0, [cam], [depth], [mask], tiny_classes)
    u, v, d = cam.project(static.positions)
    assert np.allclose(u, static.pixels[:, 0], atol=1e-6)
    assert np.allclose(v, static.pixels[:, 1], atol=1e-6)
    assert np.allclose(d, depth[static.pixels[:, 1], static.pixels[:, 0]], atol=1e-6)


def test_split_stride(tiny_classes):
    cls = np.zeros((4, 4), dtype=np.int16)
    static, _ = split_frame(0, *_frame_inputs(tiny_classes, cls), tiny_classes, stride=2)
    assert len(static) == 4
    assert all(u % 2 == 0 and v % 2 == 0 for u, v in static.pixels)


def test_cloud_concat_and_take(tiny_classes):
    cls = np.zeros((2, 2), dtype=np.int16)
    a, _ = split_frame(0, *_frame_inputs(tiny_classes, cls), tiny_classes)
    b, _ = split_frame(1, *_frame_inputs(tiny_classes, cls), tiny_classes)
    both = LabeledPointCloud.concatenate([a, b])
    assert len(both) == 8
    assert (both.frame_indices[:4] == 0).all() and (both.frame_indices[4:] == 1).all()
    sub = both.take(both.frame_indices == 1)
    assert len(sub) == 4
