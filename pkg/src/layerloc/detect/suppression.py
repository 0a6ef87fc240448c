"""Non-maximum suppression over scored bounding boxes."""

from __future__ import annotations

import numpy as np

from .. import _kernels
from ..data.types import BoundingBox


def nms_boxes(boxes: list[BoundingBox], iou_threshold: float) -> list[BoundingBox]:
    """Greedy score-descending suppression; keeps class labels intact.

    Boxes must carry scores. Suppression is class-agnostic: a confident box
    removes overlapping boxes of any class.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError(f"iou_threshold must lie in [0, 1], got {iou_threshold}")
    if not boxes:
        return []
    arr = np.array([(b.x, b.y, b.w, b.h) for b in boxes], dtype=np.float64)
    scores = np.empty(len(boxes), dtype=np.float64)
    for i, b in enumerate(boxes):
        if b.score is None:
            raise ValueError(f"box {i} has no score; suppression needs scored boxes")
        scores[i] = b.score
    keep = _kernels.nms(arr, scores, iou_threshold)
    return [boxes[int(i)] for i in keep]
