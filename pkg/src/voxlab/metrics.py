"""Occupancy evaluation: per-class IoU, geometric IoU, ray-based IoU, and the
visibility-masked cross-entropy.

All grid metrics are restricted to cells observed by the visibility mask.
The ray metric compares, per query ray, the distance and class of the first
occupied cell in prediction and ground truth; a pair agreeing on the class
within a distance tolerance counts as a true positive.

Count-level helpers are exposed so callers can aggregate exactly across
frames before forming ratios.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from voxlab import traversal
from voxlab.errors import ValidationError
from voxlab.scene import ClassTable
from voxlab.voxelize import VisibilityGrid, VoxelGrid

DEFAULT_RAY_THRESHOLDS = (1.0, 2.0, 4.0)


@dataclass
class EvalReport:
    per_class_iou: dict[str, float]
    miou: float
    geometric_iou: float
    ray_iou: dict[float, float] = field(default_factory=dict)
    mean_ray_iou: float = float("nan")

    def to_json(self) -> dict:
        return {
            "per_class_iou": self.per_class_iou,
            "miou": self.miou,
            "geometric_iou": self.geometric_iou,
            "ray_iou": {f"{t:g}": v for t, v in self.ray_iou.items()},
            "mean_ray_iou": self.mean_ray_iou,
        }


@dataclass
class IoUCounts:
    """Per-class intersection/union cell counts plus geometric counts."""

    intersection: np.ndarray  # (n_classes,) int64
    union: np.ndarray         # (n_classes,) int64
    geo_intersection: int = 0
    geo_union: int = 0

    def merge(self, other: "IoUCounts") -> None:
        self.intersection += other.intersection
        self.union += other.union
        self.geo_intersection += other.geo_intersection
        self.geo_union += other.geo_union


def _check_specs(pred: VoxelGrid, gt: VoxelGrid, mask: VisibilityGrid) -> None:
    for g in (gt, mask):
        if g.spec.dims != pred.spec.dims or not np.allclose(g.spec.origin, pred.spec.origin) \
                or g.spec.resolution != pred.spec.resolution:
            raise ValidationError("grid specs of pred/gt/mask do not match")


def iou_counts(pred: VoxelGrid, gt: VoxelGrid, mask: VisibilityGrid,
               classes: ClassTable) -> IoUCounts:
    _check_specs(pred, gt, mask)
    obs = mask.observed
    p = pred.labels[obs].astype(np.int64)
    g = gt.labels[obs].astype(np.int64)
    n = len(classes)
    inter = np.bincount(p[p == g], minlength=n)[:n]
    union = (np.bincount(p, minlength=n) + np.bincount(g, minlength=n) - inter)[:n]
    p_occ = p != classes.empty_id
    g_occ = g != classes.empty_id
    return IoUCounts(
        intersection=inter.astype(np.int64),
        union=union.astype(np.int64),
        geo_intersection=int(np.count_nonzero(p_occ & g_occ)),
        geo_union=int(np.count_nonzero(p_occ | g_occ)),
    )


def report_from_counts(counts: IoUCounts, classes: ClassTable) -> EvalReport:
    per_class = {}
    for cid in classes.semantic_ids:
        if counts.union[cid] > 0:
            per_class[classes[cid].name] = float(counts.intersection[cid] / counts.union[cid])
    miou = float(np.mean(list(per_class.values()))) if per_class else float("nan")
    geo = counts.geo_intersection / counts.geo_union if counts.geo_union > 0 else 1.0
    return EvalReport(per_class_iou=per_class, miou=miou, geometric_iou=float(geo))


def grid_iou(pred: VoxelGrid, gt: VoxelGrid, mask: VisibilityGrid,
             classes: ClassTable) -> EvalReport:
    """Per-class and geometric IoU over observed cells.

    Classes with no support in either grid are excluded from the mean rather
    than scored zero.
    """
    return report_from_counts(iou_counts(pred, gt, mask, classes), classes)


class RayProfile(NamedTuple):
    """First-surface response of a grid along a set of rays."""

    hit: np.ndarray        # (N,) bool
    class_id: np.ndarray   # (N,) int64, undefined where miss
    distance: np.ndarray   # (N,) euclidean distance to the entry of the hit cell


def ray_profile(grid: VoxelGrid, origins: np.ndarray, directions: np.ndarray,
                classes: ClassTable) -> RayProfile:
    occ = grid.occupancy(classes.empty_id)
    hit, cell, t_in, _ = traversal.first_occupied(origins, directions, grid.spec, occ)
    cls = np.zeros(len(hit), dtype=np.int64)
    cls[hit] = grid.labels[cell[hit, 0], cell[hit, 1], cell[hit, 2]]
    dist = t_in * np.linalg.norm(np.atleast_2d(directions), axis=1)
    return RayProfile(hit=hit, class_id=cls, distance=dist)


@dataclass
class RayIoUCounts:
    """TP/FP/FN per class, one row per distance threshold."""

    thresholds: tuple[float, ...]
    tp: np.ndarray  # (n_thresholds, n_classes) int64
    fp: np.ndarray
    fn: np.ndarray

    def merge(self, other: "RayIoUCounts") -> None:
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn


def ray_iou_counts(pred_prof: RayProfile, gt_prof: RayProfile,
                   thresholds, n_classes: int) -> RayIoUCounts:
    thresholds = tuple(float(t) for t in thresholds)
    shape = (len(thresholds), n_classes)
    tp = np.zeros(shape, dtype=np.int64)
    fp = np.zeros(shape, dtype=np.int64)
    fn = np.zeros(shape, dtype=np.int64)

    both = pred_prof.hit & gt_prof.hit
    pred_only = pred_prof.hit & ~gt_prof.hit
    gt_only = gt_prof.hit & ~pred_prof.hit
    same_class = both & (pred_prof.class_id == gt_prof.class_id)
    ddist = np.abs(pred_prof.distance - gt_prof.distance)

    for ti, tau in enumerate(thresholds):
        if tau <= 0:
            raise ValidationError(f"ray IoU threshold must be positive, got {tau}")
        matched = same_class & (ddist <= tau)
        mismatched = both & ~matched
        tp[ti] += np.bincount(pred_prof.class_id[matched], minlength=n_classes)[:n_classes]
        fp[ti] += np.bincount(pred_prof.class_id[pred_only | mismatched], minlength=n_classes)[:n_classes]
        fn[ti] += np.bincount(gt_prof.class_id[gt_only | mismatched], minlength=n_classes)[:n_classes]
    return RayIoUCounts(thresholds=thresholds, tp=tp, fp=fp, fn=fn)


def ray_scores_from_counts(counts: RayIoUCounts) -> tuple[dict[float, float], float]:
    scores = {}
    for ti, tau in enumerate(counts.thresholds):
        support = counts.tp[ti] + counts.fp[ti] + counts.fn[ti]
        present = support > 0
        if not present.any():
            scores[tau] = float("nan")
            continue
        scores[tau] = float(np.mean(counts.tp[ti][present] / support[present]))
    vals = [v for v in scores.values() if not np.isnan(v)]
    mean = float(np.mean(vals)) if vals else float("nan")
    return scores, mean


def ray_iou(pred: VoxelGrid, gt: VoxelGrid, origins: np.ndarray, directions: np.ndarray,
            classes: ClassTable, thresholds=DEFAULT_RAY_THRESHOLDS) -> dict[float, float]:
    """Ray-based IoU at each distance threshold.

    Per ray, a true positive requires both grids to respond with the same
    class and first-surface distances within the threshold; a prediction
    hitting where the reference misses (or with the wrong class) is a false
    positive, and symmetrically for false negatives.  The score per class is
    TP/(TP+FP+FN), averaged over classes with any support.
    """
    origins = np.atleast_2d(origins)
    if origins.shape[0] == 0:
        raise ValidationError("ray_iou requires a non-empty ray set")
    pred_prof = ray_profile(pred, origins, directions, classes)
    gt_prof = ray_profile(gt, origins, directions, classes)
    counts = ray_iou_counts(pred_prof, gt_prof, thresholds, len(classes))
    scores, _ = ray_scores_from_counts(counts)
    return scores


class MaskedLoss(NamedTuple):
    value: float
    empty_mask: bool


def masked_cross_entropy(probs: np.ndarray, labels: VoxelGrid,
                         mask: VisibilityGrid) -> MaskedLoss:
    """Mean negative log-likelihood of the labels over observed cells.

    ``probs`` has shape dims + (n_classes,) and must sum to one (within 1e-6)
    along the class axis for every observed cell.  With an all-unobserved
    mask the loss is 0 and the ``empty_mask`` flag is set.
    """
    if probs.shape[:3] != labels.spec.dims:
        raise ValidationError(f"probs shape {probs.shape} does not cover grid dims {labels.spec.dims}")
    obs = mask.observed
    if not obs.any():
        return MaskedLoss(value=0.0, empty_mask=True)
    p = probs[obs]
    sums = p.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise ValidationError(f"probabilities are not normalized (max |sum-1| = {worst:.3g})")
    picked = p[np.arange(len(p)), labels.labels[obs].astype(np.int64)]
    return MaskedLoss(value=float(np.mean(-np.log(picked))), empty_mask=False)
