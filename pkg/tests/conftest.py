"""Shared fixtures: tiny synthetic datasets reused across suites."""

from __future__ import annotations

import numpy as np
import pytest

from layerloc.data.types import BandId, BoundingBox, MultiLayerSample, SegMask
from layerloc.synthetic.blobs import (
    BlobSceneConfig,
    default_gap_config,
    synthesize_blob_dataset,
)

BANDS = (BandId("band0", 0), BandId("band1", 1), BandId("band2", 2))


def make_sample(
    seed: int = 0,
    shape: tuple[int, int] = (32, 32),
    n_bands: int = 3,
    with_masks: bool = True,
    sample_id: str | None = None,
    timestamp: int | None = None,
) -> MultiLayerSample:
    """A small hand-rolled sample: random rasters, one box + mask per band."""
    rng = np.random.default_rng(seed)
    h, w = shape
    bands = BANDS[:n_bands]
    images = {b: rng.uniform(size=shape) for b in bands}
    detections = {}
    masks = {}
    for k, band in enumerate(bands):
        x, y = 2 + k, 3 + k
        bw, bh = w // 3, h // 4
        detections[band] = [BoundingBox(x, y, bw, bh, class_id=1)]
        labels = np.zeros(shape, dtype=np.int64)
        labels[y : y + bh, x : x + bw] = 1
        masks[band] = SegMask(labels, ("background", "object"))
    return MultiLayerSample(
        sample_id=sample_id or f"s{seed:03d}",
        timestamp=timestamp if timestamp is not None else seed,
        images=images,
        detections=detections,
        masks=masks if with_masks else None,
    )


@pytest.fixture(scope="session")
def blob_dataset(tmp_path_factory):
    """Six rendered multi-band samples with ground-truth boxes and masks."""
    out = tmp_path_factory.mktemp("blobs")
    cfg = BlobSceneConfig(noise_sigma=0.02, seed=11)
    gap = default_gap_config(n_bands=3, gap=1, depth=cfg.volume_shape[0])
    manifest = synthesize_blob_dataset(cfg, 6, gap, out)
    return manifest
