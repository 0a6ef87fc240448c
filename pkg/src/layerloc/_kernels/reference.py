"""Pure NumPy implementations of the geometry kernels.

These are the fallback backend when the compiled extension is unavailable
(and the ground truth it is tested against). Boxes are (x, y, w, h) with a
top-left origin and half-open extents, so box area is exactly w * h and the
intersection arithmetic below is exact on integer inputs.
"""

import numpy as np


def pairwise_intersection(boxes_a, boxes_b):
    """Intersection areas between two box sets, shape (len(a), len(b))."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    ax1, ay1 = a[:, 0:1], a[:, 1:2]
    ax2, ay2 = ax1 + a[:, 2:3], ay1 + a[:, 3:4]
    bx1, by1 = b[None, :, 0], b[None, :, 1]
    bx2, by2 = bx1 + b[None, :, 2], by1 + b[None, :, 3]
    iw = np.clip(np.minimum(ax2, bx2) - np.maximum(ax1, bx1), 0.0, None)
    ih = np.clip(np.minimum(ay2, by2) - np.maximum(ay1, by1), 0.0, None)
    return iw * ih


def pairwise_iou(boxes_a, boxes_b):
    """IoU matrix between two box sets, shape (len(a), len(b))."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    inter = pairwise_intersection(a, b)
    area_a = (a[:, 2] * a[:, 3])[:, None]
    area_b = (b[:, 2] * b[:, 3])[None, :]
    union = area_a + area_b - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    return iou


def nms(boxes, scores, iou_threshold):
    """Greedy non-maximum suppression.

    Boxes are visited in descending score order (ties keep input order); a
    box is suppressed when its IoU with an already kept box is strictly
    greater than ``iou_threshold``. Returns the kept indices in the order
    they were kept, i.e. sorted by descending score.
    """
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    order = np.argsort(-scores, kind="stable")
    keep = []
    suppressed = np.zeros(len(boxes), dtype=bool)
    for idx in order:
        if suppressed[idx]:
            continue
        keep.append(idx)
        suppressed[idx] = True
        rest = order[~suppressed[order]]
        if rest.size:
            ious = pairwise_iou(boxes[idx : idx + 1], boxes[rest])[0]
            suppressed[rest[ious > iou_threshold]] = True
    return np.asarray(keep, dtype=np.int64)


def crop_resize_bilinear(image, x, y, w, h, target):
    """Crop a w*h box at (x, y) and resample it to a target*target patch.

    Bilinear interpolation with corner alignment: output corner pixels map
    exactly onto the source region's corner pixels, so resizing a region to
    its own size is the identity and constant regions stay constant.
    """
    img = np.asarray(image, dtype=np.float64)
    if w <= 0 or h <= 0 or target < 1:
        raise ValueError("box extents and target size must be positive")
    if x < 0 or y < 0 or x + w > img.shape[1] or y + h > img.shape[0]:
        raise ValueError(
            f"box ({x},{y},{w},{h}) exceeds image bounds {img.shape[1]}x{img.shape[0]}"
        )
    if target == 1:
        sx = np.array([x + (w - 1) / 2.0])
        sy = np.array([y + (h - 1) / 2.0])
    else:
        sx = x + np.arange(target) * ((w - 1) / (target - 1))
        sy = y + np.arange(target) * ((h - 1) / (target - 1))
    x0 = np.clip(np.floor(sx).astype(np.int64), 0, img.shape[1] - 1)
    y0 = np.clip(np.floor(sy).astype(np.int64), 0, img.shape[0] - 1)
    x1 = np.minimum(x0 + 1, img.shape[1] - 1)
    y1 = np.minimum(y0 + 1, img.shape[0] - 1)
    fx = sx - x0
    fy = sy - y0
    top = img[np.ix_(y0, x0)] * (1 - fx)[None, :] + img[np.ix_(y0, x1)] * fx[None, :]
    bot = img[np.ix_(y1, x0)] * (1 - fx)[None, :] + img[np.ix_(y1, x1)] * fx[None, :]
    return top * (1 - fy)[:, None] + bot * fy[:, None]
