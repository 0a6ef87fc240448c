"""File formats: 16-bit grayscale PNG rasters, 8-bit class-index mask PNGs,
and `x,y,w,h,class_id[,score]` CSV box lists."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image

from .types import BoundingBox, SegMask

RASTER_SCALE = 65535.0


def write_raster(path: str | Path, image: np.ndarray) -> None:
    """Store an intensity image in [0, 1] as 16-bit grayscale PNG."""
    img = np.asarray(image, dtype=np.float64)
    if img.min() < 0 or img.max() > 1:
        raise ValueError("raster intensities must lie in [0, 1]")
    quantized = np.round(img * RASTER_SCALE).astype(np.uint16)
    Image.fromarray(quantized).save(Path(path), format="PNG")


def read_raster(path: str | Path) -> np.ndarray:
    """Load a grayscale PNG and normalize to float64 in [0, 1]."""
    with Image.open(Path(path)) as im:
        arr = np.asarray(im)
    if arr.ndim != 1 and arr.ndim != 2:
        raise ValueError(f"{path}: expected single-channel image, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        return arr.astype(np.float64) / 255.0
    return arr.astype(np.float64) / RASTER_SCALE


def write_mask(path: str | Path, mask: SegMask) -> None:
    if len(mask.class_set) > 256:
        raise ValueError("mask PNG supports at most 256 classes")
    Image.fromarray(mask.labels.astype(np.uint8), mode="L").save(Path(path), format="PNG")


def read_mask(path: str | Path, class_set: Sequence[str]) -> SegMask:
    with Image.open(Path(path)) as im:
        arr = np.asarray(im)
    return SegMask(arr.astype(np.int64), tuple(class_set))


def write_boxes(path: str | Path, boxes: Sequence[BoundingBox]) -> None:
    lines = []
    for b in boxes:
        cells = [format_coord(b.x), format_coord(b.y), format_coord(b.w), format_coord(b.h), str(b.class_id)]
        if b.score is not None:
            cells.append(repr(float(b.score)))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def format_coord(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def read_boxes(path: str | Path) -> list[BoundingBox]:
    boxes = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        cells = line.split(",")
        if len(cells) not in (5, 6):
            raise ValueError(f"{path}:{lineno}: expected x,y,w,h,class_id[,score], got {line!r}")
        x, y, w, h = (float(c) for c in cells[:4])
        score = float(cells[5]) if len(cells) == 6 else None
        boxes.append(BoundingBox(x, y, w, h, class_id=int(cells[4]), score=score))
    return boxes
