"""Anchor labelling and box-offset parameterization.

Each band's proposal head is supervised against that band's own ground
truth only. An anchor is positive when it overlaps some ground-truth box at
IoU >= pos_iou, or when it is a ground-truth box's best anchor (so every
box recruits at least one anchor); negative when its best IoU falls below
neg_iou; ignored otherwise.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


def encode_offsets(boxes: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Standard (tx, ty, tw, th) offsets of boxes relative to anchors."""
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    acx = anchors[:, 0] + anchors[:, 2] / 2.0
    acy = anchors[:, 1] + anchors[:, 3] / 2.0
    bcx = boxes[:, 0] + boxes[:, 2] / 2.0
    bcy = boxes[:, 1] + boxes[:, 3] / 2.0
    t = np.empty_like(boxes)
    t[:, 0] = (bcx - acx) / anchors[:, 2]
    t[:, 1] = (bcy - acy) / anchors[:, 3]
    t[:, 2] = np.log(boxes[:, 2] / anchors[:, 2])
    t[:, 3] = np.log(boxes[:, 3] / anchors[:, 3])
    return t


def decode_offsets(offsets: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Inverse of encode_offsets; returns (x, y, w, h) boxes."""
    t = np.asarray(offsets, dtype=np.float64).reshape(-1, 4)
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    acx = anchors[:, 0] + anchors[:, 2] / 2.0
    acy = anchors[:, 1] + anchors[:, 3] / 2.0
    cx = t[:, 0] * anchors[:, 2] + acx
    cy = t[:, 1] * anchors[:, 3] + acy
    w = np.exp(t[:, 2]) * anchors[:, 2]
    h = np.exp(t[:, 3]) * anchors[:, 3]
    out = np.empty_like(t)
    out[:, 0] = cx - w / 2.0
    out[:, 1] = cy - h / 2.0
    out[:, 2] = w
    out[:, 3] = h
    return out


def assign_rpn_targets(
    anchors: np.ndarray,
    gt_boxes: np.ndarray,
    pos_iou: float = 0.7,
    neg_iou: float = 0.3,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-anchor labels in {1, 0, -1} plus offset targets on positives.

    Offset targets are encoded against each positive anchor's highest-IoU
    ground-truth box; best-anchor forcing requires a strictly positive IoU.
    With no ground truth every anchor is negative.
    """
    if not 0.0 <= neg_iou < pos_iou <= 1.0:
        raise ValueError(f"need 0 <= neg_iou < pos_iou <= 1, got ({pos_iou}, {neg_iou})")
    anchors = np.asarray(anchors, dtype=np.float64).reshape(-1, 4)
    gt_boxes = np.asarray(gt_boxes, dtype=np.float64).reshape(-1, 4)
    n = len(anchors)
    offsets = np.zeros((n, 4), dtype=np.float64)
    if len(gt_boxes) == 0:
        return np.full(n, NEGATIVE, dtype=np.int64), offsets

    iou = _kernels.pairwise_iou(anchors, gt_boxes)
    best_gt = iou.argmax(axis=1)
    best_iou = iou[np.arange(n), best_gt]

    labels = np.full(n, IGNORE, dtype=np.int64)
    labels[best_iou < neg_iou] = NEGATIVE
    labels[best_iou >= pos_iou] = POSITIVE
    # every ground-truth box recruits its best-overlap anchors (ties included)
    gt_best = iou.max(axis=0)
    for j in range(len(gt_boxes)):
        if gt_best[j] <= 0:
            continue
        forced = np.flatnonzero(iou[:, j] == gt_best[j])
        labels[forced] = POSITIVE
        retarget = forced[iou[forced, best_gt[forced]] < iou[forced, j]]
        best_gt[retarget] = j

    pos = labels == POSITIVE
    if pos.any():
        offsets[pos] = encode_offsets(gt_boxes[best_gt[pos]], anchors[pos])
    return labels, offsets
