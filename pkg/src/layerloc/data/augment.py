"""Mirror augmentation. Every band of a sample receives the same transform,
and boxes/masks are flipped consistently with the rasters, so each mirror is
an exact involution."""

from __future__ import annotations

from .types import AugmentationSpec, BoundingBox, MultiLayerSample, SegMask


def _flip_box(box: BoundingBox, width: int, height: int, ew: bool, ns: bool) -> BoundingBox:
    x = width - box.x - box.w if ew else box.x
    y = height - box.y - box.h if ns else box.y
    return BoundingBox(x, y, box.w, box.h, class_id=box.class_id, score=box.score)


def mirror_sample(sample: MultiLayerSample, ew: bool, ns: bool, suffix: str = "") -> MultiLayerSample:
    """Mirror rasters, boxes, and masks east-west and/or north-south."""
    h, w = sample.frame_shape
    sl_y = slice(None, None, -1) if ns else slice(None)
    sl_x = slice(None, None, -1) if ew else slice(None)
    images = {band: img[sl_y, sl_x].copy() for band, img in sample.images.items()}
    detections = {
        band: [_flip_box(b, w, h, ew, ns) for b in boxes]
        for band, boxes in sample.detections.items()
    }
    masks = None
    if sample.masks is not None:
        masks = {
            band: SegMask(mask.labels[sl_y, sl_x].copy(), mask.class_set)
            for band, mask in sample.masks.items()
        }
    return MultiLayerSample(
        sample_id=sample.sample_id + suffix,
        timestamp=sample.timestamp,
        images=images,
        detections=detections,
        masks=masks,
    )


def augment(sample: MultiLayerSample, spec: AugmentationSpec) -> list[MultiLayerSample]:
    """Emit the original plus the requested mirrored copies (up to 4 samples)."""
    out = [sample]
    if spec.north_south:
        out.append(mirror_sample(sample, ew=False, ns=True, suffix="~ns"))
    if spec.east_west:
        out.append(mirror_sample(sample, ew=True, ns=False, suffix="~ew"))
    if spec.both:
        out.append(mirror_sample(sample, ew=True, ns=True, suffix="~nsew"))
    return out
