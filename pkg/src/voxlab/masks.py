"""Fuse per-class detection masks into one dense semantic mask.

Detections arrive as binary masks with a confidence logit each (one mask per
detector box, already grown to pixel accuracy by the upstream segmenter).
Fusion keeps, per pixel, the class of the covering detection with the highest
logit.  Detections of the generic background class and detections below the
logit threshold are dropped beforehand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from voxlab.errors import ValidationError
from voxlab.scene import ClassTable

# Marker for detections of the generic background prompt (e.g. "sky"); such
# boxes exist only to absorb false positives and never reach the fused mask.
BACKGROUND_CLASS = -1

DEFAULT_LOGIT_THRESHOLD = 0.2


@dataclass(frozen=True)
class DetectionMask:
    class_id: int
    logit: float
    mask: np.ndarray  # (height, width) bool

    def __post_init__(self):
        if not (0.0 < self.logit <= 1.0):
            raise ValidationError(f"detection logit must be in (0, 1], got {self.logit}")
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))


@dataclass(frozen=True)
class SemanticMask:
    """Dense per-pixel class ids plus the winning logit per pixel."""

    classes: np.ndarray  # (height, width) class id, unlabeled where uncovered
    logits: np.ndarray   # (height, width) float32, 0 where unlabeled

    @property
    def shape(self) -> tuple[int, int]:
        return self.classes.shape


def filter_detections(dets: list[DetectionMask], threshold: float = DEFAULT_LOGIT_THRESHOLD) -> list[DetectionMask]:
    """Drop background detections and detections with logit below the threshold.

    The comparison is >=: a detection at exactly the threshold is kept.
    Order is preserved.
    """
    if not (0.0 < threshold < 1.0):
        raise ValidationError(f"logit threshold must be in (0, 1), got {threshold}")
    return [d for d in dets if d.class_id != BACKGROUND_CLASS and d.logit >= threshold]


def fuse_masks(dets: list[DetectionMask], dims: tuple[int, int], classes: ClassTable) -> SemanticMask:
    """Overlay filtered detections; each pixel takes the highest-logit class.

    Logit ties break toward the lower class id, which makes the result
    independent of detection order.  ``dims`` is (height, width).

    Raises:
        ValidationError: on a mask/dims mismatch or an unfiltered background
            detection.
    """
    h, w = dims
    best_class = np.full((h, w), classes.unlabeled_id, dtype=np.int16)
    best_logit = np.zeros((h, w), dtype=np.float32)
    for d in dets:
        if d.class_id == BACKGROUND_CLASS:
            raise ValidationError("background detection passed to fuse_masks; filter first")
        if d.mask.shape != (h, w):
            raise ValidationError(f"detection mask is {d.mask.shape}, expected {(h, w)}")
        logit = np.float32(d.logit)
        wins = d.mask & (
            (logit > best_logit)
            | ((logit == best_logit) & (d.class_id < best_class))
        )
        best_class[wins] = d.class_id
        best_logit[wins] = logit
    return SemanticMask(classes=best_class, logits=best_logit)
