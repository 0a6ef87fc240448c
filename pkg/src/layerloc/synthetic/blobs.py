"""Desk-scale synthetic dataset: spherical blobs in a 3D volume, observed as
per-band 2D cuts with exact geometric ground truth.

Each sample is an independent scene. Blob geometry writes an intensity
volume and a binary class volume; bands take slices z0 + k*g, scaled by a
per-band attenuation and corrupted with additive Gaussian noise. Ground
truth comes from the noiseless class volume, so per-band masks and boxes
are exact. Generation is deterministic: sample k uses an RNG stream seeded
by (seed, k).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..data.manifest import DatasetManifest, write_dataset
from ..data.types import MultiLayerSample
from .slicing import SliceGapConfig, build_multilayer_from_volumes

CLASSES = ("background", "blob")


@dataclass(frozen=True)
class BlobSceneConfig:
    volume_shape: tuple[int, int, int] = (16, 64, 64)
    blob_count_range: tuple[int, int] = (1, 3)
    blob_radius_range: tuple[float, float] = (3.5, 7.0)
    band_attenuation: tuple[float, ...] = (1.0, 0.5, 0.8)
    noise_sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "volume_shape", tuple(int(v) for v in self.volume_shape))
        object.__setattr__(self, "band_attenuation", tuple(float(a) for a in self.band_attenuation))
        d, h, w = self.volume_shape
        rmax = self.blob_radius_range[1]
        if 2 * rmax > min(h, w) - 1 or 2 * rmax > d - 1:
            raise ValueError(
                f"blob radius {rmax} does not fit inside volume {self.volume_shape}"
            )
        if self.blob_count_range[0] < 0 or self.blob_count_range[0] > self.blob_count_range[1]:
            raise ValueError(f"bad blob count range {self.blob_count_range}")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")


def render_blob_scene(
    cfg: BlobSceneConfig,
    rng: np.random.Generator,
    slice_window: tuple[int, int] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """One scene: (intensity volume in [0,1], binary class volume).

    Blob depth centers are drawn near ``slice_window`` (lo, hi) when given,
    so most blobs intersect the band slices; lateral centers are free.
    """
    d, h, w = cfg.volume_shape
    intensity = np.zeros((d, h, w), dtype=np.float64)
    gt = np.zeros((d, h, w), dtype=np.int64)
    n_blobs = int(rng.integers(cfg.blob_count_range[0], cfg.blob_count_range[1] + 1))
    zz, yy, xx = np.meshgrid(np.arange(d), np.arange(h), np.arange(w), indexing="ij")
    for _ in range(n_blobs):
        r = rng.uniform(*cfg.blob_radius_range)
        zlo, zhi = (0, d - 1) if slice_window is None else slice_window
        z_min = min(max(r, zlo - r / 2), d - 1 - r)
        z_max = max(min(d - 1 - r, zhi + r / 2), z_min)
        zc = rng.uniform(z_min, z_max)
        yc = rng.uniform(r, h - 1 - r)
        xc = rng.uniform(r, w - 1 - r)
        amplitude = rng.uniform(0.55, 0.95)
        inside = (zz - zc) ** 2 + (yy - yc) ** 2 + (xx - xc) ** 2 <= r * r
        intensity[inside] = np.maximum(intensity[inside], amplitude)
        gt[inside] = 1
    return intensity, gt


def render_sample(
    cfg: BlobSceneConfig,
    gap_cfg: SliceGapConfig,
    sample_index: int,
) -> MultiLayerSample:
    """Render scene ``sample_index`` and slice it into a multi-band sample."""
    n_bands = len(gap_cfg.band_order)
    if len(cfg.band_attenuation) != n_bands:
        raise ValueError(
            f"{len(cfg.band_attenuation)} attenuation values for {n_bands} bands"
        )
    rng = np.random.default_rng([cfg.seed, sample_index])
    window = (gap_cfg.z0, gap_cfg.slice_indices[-1])
    intensity, gt = render_blob_scene(cfg, rng, slice_window=window)
    clean = build_multilayer_from_volumes(
        {name: intensity for name in gap_cfg.band_order},
        gt,
        gap_cfg,
        class_set=CLASSES,
        sample_id=f"blob{sample_index:05d}",
        timestamp=sample_index,
    )
    for k, band in enumerate(clean.bands):
        img = clean.images[band] * cfg.band_attenuation[k]
        if cfg.noise_sigma > 0:
            img = img + rng.normal(0.0, cfg.noise_sigma, size=img.shape)
        clean.images[band] = np.clip(img, 0.0, 1.0)
    return clean


def synthesize_blob_dataset(
    cfg: BlobSceneConfig,
    n_samples: int,
    gap_cfg: SliceGapConfig,
    out_dir: str | Path,
    split: str | None = None,
) -> DatasetManifest:
    """Render ``n_samples`` scenes and write a manifest under ``out_dir``."""
    gap_cfg.check_depth(cfg.volume_shape[0])
    samples = (render_sample(cfg, gap_cfg, i) for i in range(n_samples))
    return write_dataset(out_dir, samples, CLASSES, split=split)


def default_gap_config(n_bands: int, gap: int, depth: int) -> SliceGapConfig:
    """Center the band slices in the volume depth."""
    span = (n_bands - 1) * gap
    z0 = max(0, (depth - 1 - span) // 2)
    return SliceGapConfig(gap=gap, z0=z0, band_order=tuple(f"band{k}" for k in range(n_bands)))
