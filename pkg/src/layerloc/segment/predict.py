"""Frame-level mask prediction driven by detected boxes.

Segmentation runs on box-shaped patches, so whole-frame masks are built by
cropping every detected region (the union over bands — a region found in
any band is segmented in all of them), classifying each patch per band,
and pasting the label patches back. Pastes happen in ascending score order
so that where regions overlap the most confident detection wins.
"""

from __future__ import annotations

import numpy as np
import torch

from ..data.patches import crop_and_resize, paste_labels, pixel_box
from ..data.types import BandId, BoundingBox, SegMask


def _paste_priority(box: BoundingBox) -> float:
    return box.score if box.score is not None else float("-inf")


def predict_masks(
    model,
    images: dict[BandId, np.ndarray],
    boxes_by_band: dict[BandId, list[BoundingBox]],
    background_class: int = 0,
    class_set: tuple[str, ...] | None = None,
) -> dict[BandId, SegMask]:
    """Per-band full-frame masks from per-band images and detections.

    ``class_set`` names the classes in the output masks (defaults to the
    stringified class indices).
    """
    cfg = model.config
    bands = {b.name: b for b in images}
    missing = [n for n in cfg.band_names if n not in bands]
    if missing:
        raise ValueError(f"missing band images: {missing}")
    frame_h, frame_w = next(iter(images.values())).shape
    if class_set is None:
        class_set = tuple(str(c) for c in range(cfg.n_classes))
    elif len(class_set) != cfg.n_classes:
        raise ValueError(
            f"class_set has {len(class_set)} names for {cfg.n_classes} classes"
        )

    union: list[BoundingBox] = []
    for band in sorted(boxes_by_band):
        union.extend(boxes_by_band[band])
    union.sort(key=_paste_priority)
    boxes_px = [pixel_box(box, frame_w, frame_h) for box in union]

    canvases = {
        band: np.full((frame_h, frame_w), background_class, dtype=np.int64)
        for band in images
    }
    if boxes_px:
        patch = cfg.patch_size
        batches: dict[str, torch.Tensor] = {}
        for band, image in images.items():
            crops = [crop_and_resize(image, px, patch) for px in boxes_px]
            batches[band.name] = torch.as_tensor(
                np.stack(crops)[:, None], dtype=torch.float32
            )
        model.eval()
        with torch.no_grad():
            scores = model(batches)
        for band in images:
            labels = scores[band.name].argmax(dim=1).cpu().numpy().astype(np.int64)
            for i, px in enumerate(boxes_px):
                paste_labels(canvases[band], labels[i], px)

    return {band: SegMask(canvas, class_set) for band, canvas in canvases.items()}
