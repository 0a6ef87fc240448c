"""Weak segmentation labels.

Two routes: derive conservative labels from an image (intensity percentile
threshold, then morphological open/close, then small-component removal), or
weaken an existing ground-truth mask by per-class erosion. Both are biased
to precision over recall: the image route never labels a pixel below the
threshold, and the erosion route is a strict subset of the input mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..data.types import SegMask
from .slicing import EIGHT_CONNECTED


@dataclass(frozen=True)
class WeakLabelConfig:
    intensity_percentile: float = 99.0
    morph_open_radius: int = 2
    morph_close_radius: int = 2
    min_component_area: int = 25

    def __post_init__(self):
        if not 0.0 < self.intensity_percentile < 100.0:
            raise ValueError(f"percentile must lie in (0, 100), got {self.intensity_percentile}")
        if self.morph_open_radius < 0 or self.morph_close_radius < 0:
            raise ValueError("morphology radii must be >= 0")
        if self.min_component_area < 0:
            raise ValueError("min_component_area must be >= 0")


def disk(radius: int) -> np.ndarray:
    """Boolean disk structuring element: dy^2 + dx^2 <= r^2."""
    if radius == 0:
        return np.ones((1, 1), dtype=bool)
    coords = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(coords, coords, indexing="ij")
    return dy * dy + dx * dx <= radius * radius


def make_weak_seg_labels(
    image: np.ndarray,
    cfg: WeakLabelConfig,
    class_set: Sequence[str] = ("background", "object"),
    foreground_class: int = 1,
) -> SegMask:
    """Threshold-and-morphology weak labels for one band raster in [0, 1]."""
    img = np.asarray(image, dtype=np.float64)
    threshold = np.percentile(img, cfg.intensity_percentile)
    above = img > threshold
    fg = above
    if cfg.morph_open_radius > 0:
        fg = ndimage.binary_opening(fg, structure=disk(cfg.morph_open_radius))
    if cfg.morph_close_radius > 0:
        fg = ndimage.binary_closing(fg, structure=disk(cfg.morph_close_radius))
    # closing can fill pixels below threshold; keep the precision bias strict
    fg &= above
    if cfg.min_component_area > 0:
        components, count = ndimage.label(fg, structure=EIGHT_CONNECTED)
        if count:
            areas = np.bincount(components.ravel())
            small = np.flatnonzero(areas < cfg.min_component_area)
            fg &= ~np.isin(components, small[small > 0])
    labels = np.where(fg, foreground_class, 0).astype(np.int64)
    return SegMask(labels, tuple(class_set))


def weaken_gt_masks(gt: SegMask, erosion_radius: int, background_class: int = 0) -> SegMask:
    """Erode each foreground class region; output is a subset of the input."""
    if erosion_radius < 0:
        raise ValueError("erosion radius must be >= 0")
    if erosion_radius == 0:
        return gt.copy()
    structure = disk(erosion_radius)
    labels = np.full_like(gt.labels, background_class)
    for class_id in np.unique(gt.labels):
        if class_id == background_class:
            continue
        region = gt.labels == class_id
        eroded = ndimage.binary_erosion(region, structure=structure)
        labels[eroded] = class_id
    return SegMask(labels, gt.class_set)
