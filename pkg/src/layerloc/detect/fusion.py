"""Combining per-band feature maps into one shared representation.

Two placement choices (``early`` right after the first convolution block,
``late`` at the end of the feature trunk) crossed with two merge operators
(channel ``concatenate`` or elementwise ``add``). The merge itself is shape
algebra and works on NumPy arrays or torch tensors alike.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STAGES = ("early", "late")
OPS = ("concatenate", "add")


@dataclass(frozen=True)
class FusionSpec:
    """Where per-band branches merge and how."""

    stage: str = "late"
    op: str = "concatenate"

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.op not in OPS:
            raise ValueError(f"op must be one of {OPS}, got {self.op!r}")

    def fused_channels(self, per_band_channels: int, n_bands: int) -> int:
        if self.op == "concatenate":
            return per_band_channels * n_bands
        return per_band_channels


def fuse_features(features: list, spec: FusionSpec):
    """Merge per-band feature maps (each (C, H, W) or (N, C, H, W)).

    All inputs must share spatial shape; ``add`` additionally requires equal
    channel counts. Works for both NumPy arrays and torch tensors.
    """
    if not features:
        raise ValueError("need at least one band's features to fuse")
    first = features[0]
    for f in features[1:]:
        if f.shape[:-3] != first.shape[:-3] or f.shape[-2:] != first.shape[-2:]:
            raise ValueError(
                f"feature shapes disagree outside the channel axis: "
                f"{tuple(first.shape)} vs {tuple(f.shape)}"
            )
    if spec.op == "add":
        for f in features[1:]:
            if f.shape[-3] != first.shape[-3]:
                raise ValueError(
                    f"additive fusion needs equal channel counts, got "
                    f"{first.shape[-3]} vs {f.shape[-3]}"
                )
        out = features[0]
        for f in features[1:]:
            out = out + f
        return out
    if isinstance(first, np.ndarray):
        return np.concatenate(features, axis=-3)
    import torch

    return torch.cat(features, dim=-3)
