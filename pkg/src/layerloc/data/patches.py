"""Crop-and-resize pipeline feeding the segmentation stage.

A detection box is cropped from every band at identical geometry and
resampled to a square patch (224x224 at full scale). Class-label grids are
resized with nearest-neighbor so label discreteness survives the round trip.
"""

from __future__ import annotations

import numpy as np

from .. import _kernels
from .types import BoundingBox, MultiLayerSample


def crop_and_resize(image: np.ndarray, box: BoundingBox, target: int) -> np.ndarray:
    """Bilinear target*target patch of the box region of one band raster."""
    x, y, w, h = int(box.x), int(box.y), int(box.w), int(box.h)
    return _kernels.crop_resize_bilinear(image, x, y, w, h, target)


def pixel_box(box: BoundingBox, width: int, height: int) -> BoundingBox:
    """Snap a (possibly fractional) box to the integer pixel grid, clipped."""
    x0 = int(np.clip(np.floor(box.x), 0, width - 1))
    y0 = int(np.clip(np.floor(box.y), 0, height - 1))
    x1 = int(np.clip(np.ceil(box.x + box.w), x0 + 1, width))
    y1 = int(np.clip(np.ceil(box.y + box.h), y0 + 1, height))
    return BoundingBox(x0, y0, x1 - x0, y1 - y0, class_id=box.class_id, score=box.score)


def crop_label_grid(labels: np.ndarray, box: BoundingBox, target: int) -> np.ndarray:
    """Nearest-neighbor target*target crop of an integer label grid."""
    x, y, w, h = int(box.x), int(box.y), int(box.w), int(box.h)
    region = labels[y : y + h, x : x + w]
    return resize_labels(region, (target, target))


def resize_labels(labels: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Nearest-neighbor resize of class indices (corner-aligned sampling)."""
    src_h, src_w = labels.shape
    dst_h, dst_w = shape
    rows = _nearest_indices(src_h, dst_h)
    cols = _nearest_indices(src_w, dst_w)
    return labels[np.ix_(rows, cols)]


def _nearest_indices(src: int, dst: int) -> np.ndarray:
    if dst == 1:
        return np.array([int(round((src - 1) / 2.0))])
    coords = np.arange(dst) * ((src - 1) / (dst - 1))
    return np.clip(np.rint(coords).astype(np.int64), 0, src - 1)


def sample_patches(
    sample: MultiLayerSample,
    box: BoundingBox,
    target: int,
    with_labels: bool = False,
):
    """Crop one box from all bands of a sample.

    Returns (patches, label_grids) where both are keyed by band; label grids
    are None when masks are absent or not requested.
    """
    h, w = sample.frame_shape
    box = pixel_box(box, w, h)
    patches = {band: crop_and_resize(img, box, target) for band, img in sample.images.items()}
    labels = None
    if with_labels and sample.masks is not None:
        labels = {
            band: crop_label_grid(mask.labels, box, target)
            for band, mask in sample.masks.items()
        }
    return patches, labels


def paste_labels(
    frame: np.ndarray,
    patch_labels: np.ndarray,
    box: BoundingBox,
) -> None:
    """Resize patch labels back to the box footprint and paste in place."""
    x, y, w, h = int(box.x), int(box.y), int(box.w), int(box.h)
    frame[y : y + h, x : x + w] = resize_labels(patch_labels, (h, w))


__all__ = [
    "crop_and_resize",
    "crop_label_grid",
    "paste_labels",
    "pixel_box",
    "resize_labels",
    "sample_patches",
]
