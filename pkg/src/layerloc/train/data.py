"""In-memory dataset preparation for the training loops.

Desk-scale datasets fit comfortably in memory, so samples are materialized
once up front; both loops then index into plain tensors, which keeps runs
deterministic under a fixed seed without any loader machinery.
"""

from __future__ import annotations

import numpy as np
import torch

from ..data.manifest import DatasetManifest, iter_samples
from ..data.patches import sample_patches
from ..data.types import BoundingBox, MultiLayerSample, boxes_to_array


def load_samples(manifest: DatasetManifest) -> list[MultiLayerSample]:
    samples = list(iter_samples(manifest))
    if not samples:
        raise ValueError("manifest contains no samples")
    shape = samples[0].frame_shape
    for s in samples:
        if s.frame_shape != shape:
            raise ValueError(
                f"sample {s.sample_id!r} frame {s.frame_shape} differs from {shape}"
            )
    return samples


def image_batch(
    samples: list[MultiLayerSample], indices: np.ndarray
) -> dict[str, torch.Tensor]:
    """Per-band (N, 1, H, W) float tensors for the chosen samples."""
    batch: dict[str, list[np.ndarray]] = {}
    for i in indices:
        for band, image in samples[int(i)].images.items():
            batch.setdefault(band.name, []).append(image)
    return {
        name: torch.as_tensor(np.stack(stack)[:, None], dtype=torch.float32)
        for name, stack in batch.items()
    }


def gt_box_arrays(sample: MultiLayerSample) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per band name: (boxes (G, 4), class ids (G,)) for one sample."""
    out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for band, boxes in sample.detections.items():
        if boxes:
            arr = boxes_to_array(boxes)
            classes = np.array([b.class_id for b in boxes], dtype=np.int64)
        else:
            arr = np.zeros((0, 4), dtype=np.float64)
            classes = np.zeros(0, dtype=np.int64)
        out[band.name] = (arr, classes)
    return out


def union_boxes(sample: MultiLayerSample) -> list[BoundingBox]:
    """All bands' boxes of one sample, in band order (duplicates kept)."""
    out: list[BoundingBox] = []
    for band in sample.bands:
        out.extend(sample.detections.get(band, []))
    return out


def build_patch_tensors(
    samples: list[MultiLayerSample],
    band_names: list[str],
    patch_size: int,
) -> tuple[dict[str, torch.Tensor], dict[str, torch.Tensor]]:
    """Box-cropped training patches and label grids, stacked per band.

    Every box from every band of a sample crops all of that sample's bands
    at identical geometry; labels come from each band's own mask. Samples
    without boxes contribute nothing.
    """
    patches: dict[str, list[np.ndarray]] = {n: [] for n in band_names}
    labels: dict[str, list[np.ndarray]] = {n: [] for n in band_names}
    for sample in samples:
        if sample.masks is None:
            raise ValueError(f"sample {sample.sample_id!r} lacks masks")
        for box in union_boxes(sample):
            crops, grids = sample_patches(sample, box, patch_size, with_labels=True)
            for band, crop in crops.items():
                if band.name not in patches:  # model may use a band subset
                    continue
                patches[band.name].append(crop)
                labels[band.name].append(grids[band])
    count = {n: len(v) for n, v in patches.items()}
    if not all(count.values()):
        raise ValueError(f"no training patches could be built (per-band counts {count})")
    return (
        {
            n: torch.as_tensor(np.stack(v)[:, None], dtype=torch.float32)
            for n, v in patches.items()
        },
        {n: torch.as_tensor(np.stack(v), dtype=torch.long) for n, v in labels.items()},
    )
