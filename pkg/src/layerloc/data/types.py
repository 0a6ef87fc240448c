"""Core data model: bands, boxes, masks, and aligned multi-band samples.

A sample bundles one time-matched set of band images. Bands are spatially
ordered cuts of a 3D scene, so every band carries its own boxes and mask;
rasters are single-channel arrays in [0, 1] and must share one (H, W).
Registration is a dataset-preparation responsibility: alignment is asserted
here, never computed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np


@dataclass(frozen=True, order=True)
class BandId:
    """One spectral band, ordered along the third spatial axis."""

    sort_index: int = field(init=False, repr=False)
    name: str
    layer_index: int

    def __post_init__(self):
        object.__setattr__(self, "sort_index", self.layer_index)


def check_band_set(bands: Sequence[BandId]) -> None:
    names = [b.name for b in bands]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate band names: {names}")
    indices = [b.layer_index for b in sorted(bands)]
    if any(j <= i for i, j in zip(indices, indices[1:])):
        raise ValueError(f"layer_index values must be strictly increasing: {indices}")


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box: top-left (x, y), half-open extents (w, h).

    ``score`` is absent for ground truth and set on predictions.
    """

    x: float
    y: float
    w: float
    h: float
    class_id: int = 0
    score: Optional[float] = None

    def __post_init__(self):
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box extents must be positive, got w={self.w} h={self.h}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must lie in [0, 1], got {self.score}")

    @property
    def area(self) -> float:
        return self.w * self.h

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.w, self.h], dtype=np.float64)

    def within(self, width: int, height: int) -> bool:
        return (
            self.x >= 0
            and self.y >= 0
            and self.x + self.w <= width
            and self.y + self.h <= height
        )


def boxes_to_array(boxes: Sequence[BoundingBox]) -> np.ndarray:
    """Stack boxes into an (N, 4) float64 array of (x, y, w, h)."""
    if not boxes:
        return np.zeros((0, 4), dtype=np.float64)
    return np.stack([b.as_array() for b in boxes])


@dataclass
class SegMask:
    """Pixel-wise class labels plus the ordered class palette."""

    labels: np.ndarray
    class_set: tuple[str, ...]

    def __post_init__(self):
        self.labels = np.asarray(self.labels)
        self.class_set = tuple(self.class_set)
        if self.labels.ndim != 2:
            raise ValueError("mask labels must be a 2D grid")
        if not np.issubdtype(self.labels.dtype, np.integer):
            raise ValueError("mask labels must be integer class indices")
        if self.labels.size and self.labels.max() >= len(self.class_set):
            raise ValueError(
                f"label {int(self.labels.max())} outside class set of size {len(self.class_set)}"
            )
        if self.labels.size and self.labels.min() < 0:
            raise ValueError("mask labels must be non-negative")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape  # type: ignore[return-value]

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=len(self.class_set))

    def copy(self) -> "SegMask":
        return SegMask(self.labels.copy(), self.class_set)


@dataclass
class MultiLayerSample:
    """One time-matched, spatially aligned set of band images with labels."""

    sample_id: str
    timestamp: str | int
    images: dict[BandId, np.ndarray]
    detections: dict[BandId, list[BoundingBox]]
    masks: Optional[dict[BandId, SegMask]] = None

    def __post_init__(self):
        if not self.images:
            raise ValueError(f"sample {self.sample_id} has no bands")
        check_band_set(list(self.images))
        shapes = {img.shape for img in self.images.values()}
        if len(shapes) != 1:
            raise ValueError(
                f"sample {self.sample_id}: band rasters disagree on shape: {sorted(shapes)}"
            )
        h, w = next(iter(shapes))
        for band, img in self.images.items():
            if img.ndim != 2:
                raise ValueError(f"sample {self.sample_id} band {band.name}: raster must be 2D")
        for band, boxes in self.detections.items():
            for box in boxes:
                if not box.within(w, h):
                    raise ValueError(
                        f"sample {self.sample_id} band {band.name}: box "
                        f"({box.x},{box.y},{box.w},{box.h}) outside {w}x{h} image"
                    )
        if self.masks:
            for band, mask in self.masks.items():
                if mask.shape != (h, w):
                    raise ValueError(
                        f"sample {self.sample_id} band {band.name}: mask shape "
                        f"{mask.shape} != raster shape {(h, w)}"
                    )

    @property
    def bands(self) -> list[BandId]:
        return sorted(self.images)

    @property
    def frame_shape(self) -> tuple[int, int]:
        return next(iter(self.images.values())).shape  # type: ignore[return-value]

    def band_named(self, name: str) -> BandId:
        for band in self.images:
            if band.name == name:
                return band
        raise KeyError(f"sample {self.sample_id} has no band named {name!r}")


@dataclass(frozen=True)
class AugmentationSpec:
    """Which mirrored copies to emit alongside the original."""

    north_south: bool = False
    east_west: bool = False
    both: bool = False


__all__ = [
    "AugmentationSpec",
    "BandId",
    "BoundingBox",
    "MultiLayerSample",
    "SegMask",
    "boxes_to_array",
    "check_band_set",
    "replace",
]
