"""Build multi-band samples from co-registered 3D volumes by assigning each
band one 2D slice, consecutive bands separated by a fixed voxel gap. Band k
carries slice z0 + k*g of modality k, and band k's ground truth is the class
volume's slice at the same index, so every band owns its own labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..data.types import BandId, BoundingBox, MultiLayerSample, SegMask

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class SliceGapConfig:
    gap: int
    z0: int
    band_order: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "band_order", tuple(self.band_order))
        if self.gap < 1:
            raise ValueError(f"slice gap must be >= 1, got {self.gap}")
        if self.z0 < 0:
            raise ValueError(f"base slice index must be >= 0, got {self.z0}")
        if not self.band_order:
            raise ValueError("band_order must name at least one modality")

    @property
    def slice_indices(self) -> list[int]:
        return [self.z0 + k * self.gap for k in range(len(self.band_order))]

    def check_depth(self, depth: int) -> None:
        last = self.slice_indices[-1]
        if last >= depth:
            raise ValueError(
                f"band slices reach index {last} but volume depth is {depth}"
            )


def boxes_from_mask(labels: np.ndarray, score: float | None = None) -> list[BoundingBox]:
    """Tight axis-aligned box per 8-connected foreground component.

    Multi-class masks use the component's majority class as the box class
    (ties to the smaller index).
    """
    foreground = labels > 0
    components, count = ndimage.label(foreground, structure=EIGHT_CONNECTED)
    boxes = []
    for slc_y, slc_x in ndimage.find_objects(components, max_label=count):
        region = labels[slc_y, slc_x][components[slc_y, slc_x] > 0]
        hist = np.bincount(region)
        hist[0] = 0
        class_id = int(np.argmax(hist))
        boxes.append(
            BoundingBox(
                x=slc_x.start,
                y=slc_y.start,
                w=slc_x.stop - slc_x.start,
                h=slc_y.stop - slc_y.start,
                class_id=class_id,
                score=score,
            )
        )
    return boxes


def build_multilayer_from_volumes(
    volumes: dict[str, np.ndarray],
    gt: np.ndarray,
    cfg: SliceGapConfig,
    class_set: Sequence[str] = ("background", "object"),
    sample_id: str = "volume",
    timestamp: str | int = 0,
) -> MultiLayerSample:
    """Slice one sample out of co-registered volumes plus a class volume."""
    shapes = {name: vol.shape for name, vol in volumes.items()}
    if len(set(shapes.values())) != 1:
        raise ValueError(f"modality volumes disagree on shape: {shapes}")
    shape = next(iter(shapes.values()))
    if gt.shape != shape:
        raise ValueError(f"class volume shape {gt.shape} != modality shape {shape}")
    missing = [name for name in cfg.band_order if name not in volumes]
    if missing:
        raise ValueError(f"band_order names absent from volumes: {missing}")
    cfg.check_depth(shape[0])

    images, detections, masks = {}, {}, {}
    for k, (name, z) in enumerate(zip(cfg.band_order, cfg.slice_indices)):
        band = BandId(name, k)
        images[band] = np.asarray(volumes[name][z], dtype=np.float64).copy()
        gt_slice = np.asarray(gt[z], dtype=np.int64).copy()
        masks[band] = SegMask(gt_slice, tuple(class_set))
        detections[band] = boxes_from_mask(gt_slice)
    return MultiLayerSample(
        sample_id=sample_id,
        timestamp=timestamp,
        images=images,
        detections=detections,
        masks=masks,
    )
