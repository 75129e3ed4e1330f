import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from voxlab.errors import ValidationError
from voxlab.masks import BACKGROUND_CLASS, DetectionMask, filter_detections, fuse_masks
from voxlab.scene import ClassDef, ClassTable

_TABLE = ClassTable([
    ClassDef(id=0, name="ground"),
    ClassDef(id=1, name="wall"),
    ClassDef(id=2, name="cone", priority_tier=0),
    ClassDef(id=3, name="actor", dynamic=True),
    ClassDef(id=4, name="unlabeled"),
    ClassDef(id=5, name="empty"),
])


def det(class_id, logit, mask):
    return DetectionMask(class_id=class_id, logit=logit, mask=np.asarray(mask, dtype=bool))


def full(h, w):
    return np.ones((h, w), dtype=bool)


def test_filter_drops_below_threshold():
    kept = filter_detections([det(3, 0.15, full(2, 2))], threshold=0.2)
    assert kept == []


def test_filter_drops_background_regardless_of_logit():
    kept = filter_detections([det(BACKGROUND_CLASS, 0.95, full(2, 2))], threshold=0.2)
    assert kept == []


def test_filter_keeps_at_exact_threshold():
    d = det(3, 0.2, full(2, 2))
    assert filter_detections([d], threshold=0.2) == [d]


def test_filter_preserves_order():
    ds = [det(1, 0.5, full(1, 1)), det(2, 0.1, full(1, 1)), det(3, 0.9, full(1, 1))]
    assert [d.class_id for d in filter_detections(ds)] == [1, 3]


def test_fuse_highest_logit_wins(tiny_classes):
    car = det(3, 0.9, full(2, 2))
    road = det(0, 0.5, full(2, 2))
    fused = fuse_masks([road, car], (2, 2), tiny_classes)
    assert (fused.classes == 3).all()
    assert (fused.logits == np.float32(0.9)).all()


def test_fuse_uncovered_is_unlabeled(tiny_classes):
    m = np.zeros((2, 2), dtype=bool)
    m[0, 0] = True
    fused = fuse_masks([det(1, 0.8, m)], (2, 2), tiny_classes)
    assert fused.classes[0, 0] == 1
    assert fused.classes[1, 1] == tiny_classes.unlabeled_id
    assert fused.logits[1, 1] == 0.0


def test_fuse_equal_logit_breaks_to_lower_id(tiny_classes):
    a = det(3, 0.7, full(1, 1))
    b = det(1, 0.7, full(1, 1))
    for order in ([a, b], [b, a]):
        fused = fuse_masks(order, (1, 1), tiny_classes)
        assert fused.classes[0, 0] == 1


def test_fuse_rejects_background(tiny_classes):
    with pytest.raises(ValidationError):
        fuse_masks([det(BACKGROUND_CLASS, 0.9, full(1, 1))], (1, 1), tiny_classes)


def test_fuse_rejects_wrong_shape(tiny_classes):
    with pytest.raises(ValidationError):
        fuse_masks([det(1, 0.9, full(2, 3))], (3, 2), tiny_classes)


@st.composite
def detection_sets(draw):
    h, w = 4, 5
    n = draw(st.integers(0, 6))
    dets = []
    for _ in range(n):
        cid = draw(st.integers(0, 3))
        logit = draw(st.sampled_from([0.2, 0.35, 0.5, 0.7, 0.7, 0.9, 1.0]))
        bits = draw(st.binary(min_size=h * w, max_size=h * w))
        mask = np.frombuffer(bits, dtype=np.uint8).reshape(h, w) % 2 == 0
        dets.append(det(cid, logit, mask))
    return dets


@settings(max_examples=60)
@given(dets=detection_sets(), seed=st.integers(0, 1000))
def test_fuse_permutation_invariant(dets, seed):
    rng = np.random.default_rng(seed)
    perm = list(rng.permutation(len(dets)))
    a = fuse_masks(dets, (4, 5), _TABLE)
    b = fuse_masks([dets[i] for i in perm], (4, 5), _TABLE)
    assert np.array_equal(a.classes, b.classes)
    assert np.array_equal(a.logits, b.logits)


@settings(max_examples=40)
@given(dets=detection_sets())
def test_fuse_dominated_detection_is_noop(dets):
    base = fuse_masks(dets, (4, 5), _TABLE)
    # A detection strictly below every winning logit on its covered pixels
    # cannot change the output.  Covered-but-unlabeled pixels have logit 0,
    # so restrict the new mask to pixels that already have a winner.
    covered = base.logits > 0.11
    if not covered.any():
        return
    weak = det(0, 0.1, covered)
    again = fuse_masks(dets + [weak], (4, 5), _TABLE)
    assert np.array_equal(base.classes, again.classes)


def test_no_output_pixel_is_background(tiny_classes):
    dets = [det(2, 0.9, full(3, 3)), det(1, 0.4, full(3, 3))]
    fused = fuse_masks(filter_detections(dets + [det(BACKGROUND_CLASS, 0.99, full(3, 3))]),
                       (3, 3), tiny_classes)
    assert (fused.classes != BACKGROUND_CLASS).all()
