"""Detection matching and segmentation overlap metrics.

A predicted box counts as a true positive when its intersection with a
ground-truth box covers at least half of *either* area — equivalently at
least half of the smaller one. This deliberately admits a small box tightly
inside a large one (plain IoU at 0.5 would reject it). Assignment is
greedy, one-to-one, in descending prediction-score order, each prediction
taking the eligible ground-truth box it overlaps most.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..data.types import BoundingBox, SegMask, boxes_to_array


@dataclass(frozen=True)
class MatchResult:
    """One band's one-to-one matching bookkeeping."""

    matches: tuple[tuple[int, int], ...]  # (prediction index, gt index)
    unmatched_preds: tuple[int, ...]  # false positives
    unmatched_gts: tuple[int, ...]  # false negatives

    @property
    def tp(self) -> int:
        return len(self.matches)

    @property
    def fp(self) -> int:
        return len(self.unmatched_preds)

    @property
    def fn(self) -> int:
        return len(self.unmatched_gts)


def intersection_area(a: BoundingBox, b: BoundingBox) -> float:
    """Overlap area of two boxes."""
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    return max(iw, 0.0) * max(ih, 0.0)


def is_eligible_match(pred: BoundingBox, gt: BoundingBox) -> bool:
    """Intersection covers >= 50% of the predicted OR the ground-truth area."""
    inter = intersection_area(pred, gt)
    return inter >= 0.5 * min(pred.area, gt.area)


def match_detections(preds: list[BoundingBox], gts: list[BoundingBox]) -> MatchResult:
    """Greedy one-to-one matching under the half-of-either-area rule.

    Predictions are visited in descending score order (ties by original
    position; missing scores sort last); each takes the not-yet-taken
    eligible ground-truth box with the largest intersection (intersection
    ties break toward the lower ground-truth index).
    """
    order = sorted(
        range(len(preds)),
        key=lambda i: (-(preds[i].score if preds[i].score is not None else float("-inf")), i),
    )
    taken = [False] * len(gts)
    matches: list[tuple[int, int]] = []
    unmatched_preds: list[int] = []
    for i in order:
        best_j = -1
        best_inter = -1.0
        for j, gt in enumerate(gts):
            if taken[j] or not is_eligible_match(preds[i], gt):
                continue
            inter = intersection_area(preds[i], gt)
            if inter > best_inter:
                best_inter = inter
                best_j = j
        if best_j >= 0:
            taken[best_j] = True
            matches.append((i, best_j))
        else:
            unmatched_preds.append(i)
    unmatched_gts = [j for j, t in enumerate(taken) if not t]
    return MatchResult(tuple(sorted(matches)), tuple(sorted(unmatched_preds)), tuple(unmatched_gts))


class PRF1(NamedTuple):
    precision: float
    recall: float
    f1: float
    degenerate: bool = False


def prf1_from_counts(tp: int, fp: int, fn: int) -> PRF1:
    """Precision, recall, and F1 with zero-guarded denominators.

    With nothing predicted and nothing to find all three are defined as 0
    and the result is flagged degenerate.
    """
    if tp < 0 or fp < 0 or fn < 0:
        raise ValueError("counts must be non-negative")
    if tp == 0 and fp == 0 and fn == 0:
        return PRF1(0.0, 0.0, 0.0, degenerate=True)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PRF1(precision, recall, f1)


def prf1(match: MatchResult) -> PRF1:
    return prf1_from_counts(match.tp, match.fp, match.fn)


@dataclass(frozen=True)
class IoUScores:
    """Per-class overlap plus the mean over classes that actually occur."""

    per_class: dict[int, float]
    mean: float
    skipped_classes: tuple[int, ...]  # empty union in both masks: left out of the mean


def iou_scores(pred: SegMask, gt: SegMask) -> IoUScores:
    """Per-class IoU between label maps sharing one class set."""
    if pred.labels.shape != gt.labels.shape:
        raise ValueError(
            f"mask shapes differ: {pred.labels.shape} vs {gt.labels.shape}"
        )
    if pred.class_set != gt.class_set:
        raise ValueError("masks carry different class sets")
    per_class: dict[int, float] = {}
    skipped: list[int] = []
    for c in range(len(pred.class_set)):
        p = pred.labels == c
        g = gt.labels == c
        union = int(np.logical_or(p, g).sum())
        if union == 0:
            skipped.append(c)
            continue
        per_class[c] = float(np.logical_and(p, g).sum() / union)
    mean = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return IoUScores(per_class, mean, tuple(skipped))


def agreement(pred_a: SegMask, pred_b: SegMask, class_id: int) -> float:
    """Single-class IoU between two methods' masks (1.0 when both empty)."""
    if pred_a.labels.shape != pred_b.labels.shape:
        raise ValueError(
            f"mask shapes differ: {pred_a.labels.shape} vs {pred_b.labels.shape}"
        )
    a = pred_a.labels == class_id
    b = pred_b.labels == class_id
    union = int(np.logical_or(a, b).sum())
    if union == 0:
        return 1.0
    return float(np.logical_and(a, b).sum() / union)


def pairwise_box_iou(a: list[BoundingBox], b: list[BoundingBox]) -> np.ndarray:
    """IoU matrix between two box lists (kernel-backed)."""
    from .. import _kernels

    if not a or not b:
        return np.zeros((len(a), len(b)))
    return _kernels.pairwise_iou(boxes_to_array(a), boxes_to_array(b))
