"""Multi-band U-Net: per-band encoders and decoders around one fused core.

Every band keeps its own encoder and its own decoder with skip connections
into that band's (or, before the merge point, the shared) encoder features.
The merge point follows the fusion spec: ``late`` joins the per-band
bottlenecks, ``early`` joins right after each band's first block and shares
the rest of the encoder. Decoders emit per-band class score maps.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch
from torch import nn

from ..detect.fusion import FusionSpec, fuse_features


@dataclass(frozen=True)
class SegmenterConfig:
    """Architecture knobs for the multi-band U-Net."""

    band_names: tuple[str, ...]
    n_classes: int = 3
    fusion: FusionSpec = field(default_factory=FusionSpec)
    depth: int = 4
    base_channels: int = 16
    patch_size: int = 224

    def __post_init__(self) -> None:
        if not self.band_names or len(self.band_names) != len(set(self.band_names)):
            raise ValueError("band names must be non-empty and unique")
        if self.n_classes < 2:
            raise ValueError("need at least two classes (background + foreground)")
        if self.depth < 2:
            raise ValueError("depth must be at least 2 (one skip level + bottleneck)")
        divisor = 2 ** (self.depth - 1)
        if self.patch_size % divisor:
            raise ValueError(f"patch_size must be divisible by {divisor}")


def _double_conv(c_in: int, c_out: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Conv2d(c_in, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(c_out, c_out, 3, padding=1),
        nn.ReLU(inplace=True),
    )


class MultiBandUNet(nn.Module):
    """Per-band segmentation scores from jointly-encoded multi-band input."""

    def __init__(self, config: SegmenterConfig):
        super().__init__()
        self.config = config
        bands = config.band_names
        d = config.depth
        base = config.base_channels
        level_c = [base * 2**i for i in range(d)]  # encoder channels per level

        self.pool = nn.MaxPool2d(2)
        if config.fusion.stage == "early":
            self.stems = nn.ModuleDict({b: _double_conv(1, level_c[0]) for b in bands})
            fused_c = config.fusion.fused_channels(level_c[0], len(bands))
            shared = []
            c_in = fused_c
            for i in range(1, d):
                shared.append(_double_conv(c_in, level_c[i]))
                c_in = level_c[i]
            self.shared_encoder = nn.ModuleList(shared)
            self.band_encoders = nn.ModuleDict()
            self.fused_bottleneck_channels = level_c[-1]
        else:
            self.stems = nn.ModuleDict()
            self.shared_encoder = nn.ModuleList()
            self.band_encoders = nn.ModuleDict(
                {
                    b: nn.ModuleList(
                        [_double_conv(1, level_c[0])]
                        + [_double_conv(level_c[i - 1], level_c[i]) for i in range(1, d)]
                    )
                    for b in bands
                }
            )
            self.fused_bottleneck_channels = config.fusion.fused_channels(
                level_c[-1], len(bands)
            )

        self.decoders = nn.ModuleDict()
        self.heads = nn.ModuleDict()
        for b in bands:
            ups = nn.ModuleList()
            convs = nn.ModuleList()
            c = self.fused_bottleneck_channels
            for i in range(d - 2, -1, -1):
                ups.append(nn.ConvTranspose2d(c, level_c[i], 2, stride=2))
                convs.append(_double_conv(2 * level_c[i], level_c[i]))
                c = level_c[i]
            self.decoders[b] = nn.ModuleDict({"ups": ups, "convs": convs})
            self.heads[b] = nn.Conv2d(level_c[0], config.n_classes, 1)

    def _encode(
        self, images: dict[str, torch.Tensor]
    ) -> tuple[torch.Tensor, dict[str, list[torch.Tensor]]]:
        """Fused deepest features plus per-band skip stacks (shallow→deep)."""
        cfg = self.config
        missing = [b for b in cfg.band_names if b not in images]
        if missing:
            raise ValueError(f"missing band images: {missing}")
        h, w = images[cfg.band_names[0]].shape[-2:]
        divisor = 2 ** (cfg.depth - 1)
        if h % divisor or w % divisor:
            raise ValueError(f"input size {(h, w)} is not divisible by {divisor}")

        skips: dict[str, list[torch.Tensor]] = {b: [] for b in cfg.band_names}
        if cfg.fusion.stage == "early":
            stem_out = {b: self.stems[b](images[b]) for b in cfg.band_names}
            for b in cfg.band_names:
                skips[b].append(stem_out[b])
            x = fuse_features([stem_out[b] for b in cfg.band_names], cfg.fusion)
            for i, block in enumerate(self.shared_encoder):
                x = block(self.pool(x))
                if i < len(self.shared_encoder) - 1:
                    for b in cfg.band_names:
                        skips[b].append(x)
            return x, skips

        deepest = []
        for b in cfg.band_names:
            x = images[b]
            blocks = self.band_encoders[b]
            for i, block in enumerate(blocks):
                x = block(x if i == 0 else self.pool(x))
                if i < len(blocks) - 1:
                    skips[b].append(x)
            deepest.append(x)
        return fuse_features(deepest, self.config.fusion), skips

    def forward_with_fused(
        self, images: dict[str, torch.Tensor]
    ) -> tuple[dict[str, torch.Tensor], torch.Tensor]:
        """Per-band (N, classes, H, W) score maps and the fused core map."""
        fused, skips = self._encode(images)
        outputs: dict[str, torch.Tensor] = {}
        for b in self.config.band_names:
            dec = self.decoders[b]
            x = fused
            for up, conv, skip in zip(dec["ups"], dec["convs"], reversed(skips[b])):
                x = conv(torch.cat([up(x), skip], dim=1))
            outputs[b] = self.heads[b](x)
        return outputs, fused

    def forward(self, images: dict[str, torch.Tensor]) -> dict[str, torch.Tensor]:
        return self.forward_with_fused(images)[0]
