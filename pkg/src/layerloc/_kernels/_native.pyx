# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled geometry kernels: pairwise IoU, greedy NMS, bilinear crop-resize.

Semantics match layerloc._kernels.reference exactly; the test suite runs the
same cases against both backends.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def pairwise_intersection(boxes_a, boxes_b):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(
        np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(
        np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double ax1, ay1, ax2, ay2, iw, ih
    for i in range(n):
        ax1 = a[i, 0]
        ay1 = a[i, 1]
        ax2 = ax1 + a[i, 2]
        ay2 = ay1 + a[i, 3]
        for j in range(m):
            iw = min(ax2, b[j, 0] + b[j, 2]) - max(ax1, b[j, 0])
            ih = min(ay2, b[j, 1] + b[j, 3]) - max(ay1, b[j, 1])
            if iw < 0:
                iw = 0
            if ih < 0:
                ih = 0
            out[i, j] = iw * ih
    return out


def pairwise_iou(boxes_a, boxes_b):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] a = np.ascontiguousarray(
        np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] b = np.ascontiguousarray(
        np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4))
    cdef Py_ssize_t n = a.shape[0], m = b.shape[0], i, j
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((n, m), dtype=np.float64)
    cdef double ax1, ay1, ax2, ay2, area_a, iw, ih, inter, union
    for i in range(n):
        ax1 = a[i, 0]
        ay1 = a[i, 1]
        ax2 = ax1 + a[i, 2]
        ay2 = ay1 + a[i, 3]
        area_a = a[i, 2] * a[i, 3]
        for j in range(m):
            iw = min(ax2, b[j, 0] + b[j, 2]) - max(ax1, b[j, 0])
            ih = min(ay2, b[j, 1] + b[j, 3]) - max(ay1, b[j, 1])
            if iw < 0:
                iw = 0
            if ih < 0:
                ih = 0
            inter = iw * ih
            union = area_a + b[j, 2] * b[j, 3] - inter
            out[i, j] = inter / union if union > 0 else 0.0
    return out


def nms(boxes, scores, double iou_threshold):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] bx = np.ascontiguousarray(
        np.asarray(boxes, dtype=np.float64).reshape(-1, 4))
    cdef cnp.ndarray[cnp.float64_t, ndim=1] sc = np.ascontiguousarray(
        np.asarray(scores, dtype=np.float64).reshape(-1))
    cdef cnp.ndarray[cnp.int64_t, ndim=1] order = np.argsort(-sc, kind="stable")
    cdef Py_ssize_t n = bx.shape[0], oi, oj, i, j, nkeep = 0
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] suppressed = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[cnp.int64_t, ndim=1] keep = np.empty(n, dtype=np.int64)
    cdef double ix1, iy1, ix2, iy2, area_i, iw, ih, inter, union, iou
    for oi in range(n):
        i = order[oi]
        if suppressed[i]:
            continue
        keep[nkeep] = i
        nkeep += 1
        ix1 = bx[i, 0]
        iy1 = bx[i, 1]
        ix2 = ix1 + bx[i, 2]
        iy2 = iy1 + bx[i, 3]
        area_i = bx[i, 2] * bx[i, 3]
        for oj in range(oi + 1, n):
            j = order[oj]
            if suppressed[j]:
                continue
            iw = min(ix2, bx[j, 0] + bx[j, 2]) - max(ix1, bx[j, 0])
            ih = min(iy2, bx[j, 1] + bx[j, 3]) - max(iy1, bx[j, 1])
            if iw < 0:
                iw = 0
            if ih < 0:
                ih = 0
            inter = iw * ih
            union = area_i + bx[j, 2] * bx[j, 3] - inter
            iou = inter / union if union > 0 else 0.0
            if iou > iou_threshold:
                suppressed[j] = 1
    return keep[:nkeep].copy()


def crop_resize_bilinear(image, double x, double y, double w,
                         double h, Py_ssize_t target):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] img = np.ascontiguousarray(
        np.asarray(image, dtype=np.float64))
    cdef Py_ssize_t ih_ = img.shape[0], iw_ = img.shape[1]
    if w <= 0 or h <= 0 or target < 1:
        raise ValueError("box extents and target size must be positive")
    if x < 0 or y < 0 or x + w > iw_ or y + h > ih_:
        raise ValueError(
            f"box ({x},{y},{w},{h}) exceeds image bounds {iw_}x{ih_}")
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((target, target),
                                                           dtype=np.float64)
    cdef double sx, sy, fx, fy, step_x, step_y, top, bot
    cdef Py_ssize_t r, c, x0, y0, x1, y1
    if target == 1:
        step_x = 0.0
        step_y = 0.0
    else:
        step_x = (w - 1.0) / (target - 1.0)
        step_y = (h - 1.0) / (target - 1.0)
    # sx, sy stay >= 0 (bounds-checked above), so C truncation == floor
    for r in range(target):
        if target == 1:
            sy = y + (h - 1.0) / 2.0
        else:
            sy = y + r * step_y
        y0 = <Py_ssize_t>sy
        if y0 > ih_ - 1:
            y0 = ih_ - 1
        y1 = y0 + 1 if y0 + 1 < ih_ else ih_ - 1
        fy = sy - y0
        for c in range(target):
            if target == 1:
                sx = x + (w - 1.0) / 2.0
            else:
                sx = x + c * step_x
            x0 = <Py_ssize_t>sx
            if x0 > iw_ - 1:
                x0 = iw_ - 1
            x1 = x0 + 1 if x0 + 1 < iw_ else iw_ - 1
            fx = sx - x0
            top = img[y0, x0] * (1 - fx) + img[y0, x1] * fx
            bot = img[y1, x0] * (1 - fx) + img[y1, x1] * fx
            out[r, c] = top * (1 - fy) + bot * fy
    return out
