"""Two-stage multi-band detector.

Each band contributes a convolutional branch; the branches merge into one
shared feature map (see :mod:`.fusion`), from which every band runs its own
proposal head and its own region-classification head. Proposal routing
between bands follows :func:`..detect.proposals.combine_proposals`: bands
keep their own proposals while training and share the union at test time.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn
from torchvision.ops import roi_align

from .. import _kernels
from ..data.types import BandId, BoundingBox
from .anchors import AnchorConfig, generate_anchors
from .fusion import FusionSpec, fuse_features
from .moo import STAGES
from .proposals import Proposal, combine_proposals
from .targets import decode_offsets


@dataclass(frozen=True)
class DetectorConfig:
    """Architecture and inference thresholds for the multi-band detector."""

    band_names: tuple[str, ...]
    n_classes: int = 1
    fusion: FusionSpec = field(default_factory=FusionSpec)
    anchor: AnchorConfig = field(default_factory=AnchorConfig)
    trunk_channels: int = 32
    head_channels: int = 64
    roi_size: int = 7
    score_threshold: float = 0.5
    proposal_nms_iou: float = 0.7
    final_nms_iou: float = 0.3
    pre_nms_top_n: int = 256
    post_nms_top_n: int = 32
    min_box_size: float = 1.0

    def __post_init__(self) -> None:
        if len(self.band_names) != len(set(self.band_names)):
            raise ValueError("band names must be unique")
        if not self.band_names:
            raise ValueError("need at least one band")
        if self.n_classes < 1:
            raise ValueError("need at least one foreground class")
        stride = self.anchor.feature_stride
        if stride & (stride - 1):
            raise ValueError(f"stride must be a power of two, got {stride}")


def _conv_block(c_in: int, c_out: int, pool: bool) -> nn.Sequential:
    layers: list[nn.Module] = [nn.Conv2d(c_in, c_out, 3, padding=1), nn.ReLU(inplace=True)]
    if pool:
        layers.append(nn.MaxPool2d(2))
    return nn.Sequential(*layers)


def clip_boxes(boxes: np.ndarray, frame_shape: tuple[int, int]) -> np.ndarray:
    """Clamp (x, y, w, h) boxes to the frame, preserving row count."""
    h, w = frame_shape
    boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
    x1 = np.clip(boxes[:, 0], 0.0, float(w))
    y1 = np.clip(boxes[:, 1], 0.0, float(h))
    x2 = np.clip(boxes[:, 0] + boxes[:, 2], 0.0, float(w))
    y2 = np.clip(boxes[:, 1] + boxes[:, 3], 0.0, float(h))
    return np.stack([x1, y1, x2 - x1, y2 - y1], axis=1)


class MultiBandDetector(nn.Module):
    """Fused-trunk detector with per-band proposal and region heads."""

    def __init__(self, config: DetectorConfig):
        super().__init__()
        self.config = config
        bands = config.band_names
        c = config.trunk_channels
        n_down = config.anchor.feature_stride.bit_length() - 1
        n_blocks = max(n_down, 1)

        if config.fusion.stage == "early":
            self.stems = nn.ModuleDict(
                {name: _conv_block(1, c, pool=n_down >= 1) for name in bands}
            )
            fused_c = config.fusion.fused_channels(c, len(bands))
            shared: list[nn.Module] = []
            c_in = fused_c
            for i in range(1, n_blocks):
                shared.append(_conv_block(c_in, c, pool=i < n_down))
                c_in = c
            self.trunk = nn.Sequential(*shared)
            self.fused_channels = c if shared else fused_c
        else:
            def branch() -> nn.Sequential:
                blocks = [_conv_block(1, c, pool=n_down >= 1)]
                blocks += [_conv_block(c, c, pool=i < n_down) for i in range(1, n_blocks)]
                return nn.Sequential(*blocks)

            self.stems = nn.ModuleDict({name: branch() for name in bands})
            self.trunk = nn.Sequential()
            self.fused_channels = config.fusion.fused_channels(c, len(bands))

        hc = config.head_channels
        a = config.anchor.anchors_per_cell
        self.rpn_heads = nn.ModuleDict()
        self.det_heads = nn.ModuleDict()
        for name in bands:
            self.rpn_heads[name] = nn.ModuleDict(
                {
                    "conv": nn.Sequential(nn.Conv2d(self.fused_channels, hc, 3, padding=1), nn.ReLU(inplace=True)),
                    "objectness": nn.Conv2d(hc, a, 1),
                    "offsets": nn.Conv2d(hc, 4 * a, 1),
                }
            )
            flat = self.fused_channels * config.roi_size * config.roi_size
            self.det_heads[name] = nn.ModuleDict(
                {
                    "mlp": nn.Sequential(
                        nn.Flatten(),
                        nn.Linear(flat, hc),
                        nn.ReLU(inplace=True),
                        nn.Linear(hc, hc),
                        nn.ReLU(inplace=True),
                    ),
                    "scores": nn.Linear(hc, config.n_classes + 1),
                    "refine": nn.Linear(hc, 4),
                }
            )
        self._anchor_cache: dict[tuple[int, int], np.ndarray] = {}

    # ---------------------------------------------------------------- trunk

    def features(self, images: dict[str, torch.Tensor]) -> torch.Tensor:
        """Fused (N, C, h, w) map from per-band (N, 1, H, W) images."""
        missing = [b for b in self.config.band_names if b not in images]
        if missing:
            raise ValueError(f"missing band images: {missing}")
        per_band = [self.stems[name](images[name]) for name in self.config.band_names]
        fused = fuse_features(per_band, self.config.fusion)
        return self.trunk(fused)

    def anchors_for(self, feat_h: int, feat_w: int) -> np.ndarray:
        key = (feat_h, feat_w)
        if key not in self._anchor_cache:
            self._anchor_cache[key] = generate_anchors(self.config.anchor, feat_h, feat_w)
        return self._anchor_cache[key]

    # ------------------------------------------------------------ first stage

    def rpn_raw(self, fused: torch.Tensor) -> dict[str, tuple[torch.Tensor, torch.Tensor]]:
        """Per-band (objectness logits (N, HWA), offsets (N, HWA, 4))."""
        n, _, h, w = fused.shape
        out: dict[str, tuple[torch.Tensor, torch.Tensor]] = {}
        for name in self.config.band_names:
            head = self.rpn_heads[name]
            x = head["conv"](fused)
            logits = head["objectness"](x).permute(0, 2, 3, 1).reshape(n, -1)
            a = self.config.anchor.anchors_per_cell
            offs = head["offsets"](x).view(n, a, 4, h, w)
            offs = offs.permute(0, 3, 4, 1, 2).reshape(n, -1, 4)
            out[name] = (logits, offs)
        return out

    def propose(
        self,
        rpn_out: dict[str, tuple[torch.Tensor, torch.Tensor]],
        feat_shape: tuple[int, int],
        frame_shape: tuple[int, int],
        image_index: int,
        bands: dict[str, BandId],
    ) -> dict[BandId, list[Proposal]]:
        """Decode, clip, and suppress one image's proposals per band."""
        cfg = self.config
        anchors = self.anchors_for(*feat_shape)
        out: dict[BandId, list[Proposal]] = {}
        for name in cfg.band_names:
            logits, offs = rpn_out[name]
            scores = torch.sigmoid(logits[image_index]).detach().cpu().numpy().astype(np.float64)
            deltas = offs[image_index].detach().cpu().numpy().astype(np.float64)
            order = np.argsort(-scores, kind="stable")[: cfg.pre_nms_top_n]
            boxes = decode_offsets(deltas[order], anchors[order])
            boxes = clip_boxes(boxes, frame_shape)
            ok = (boxes[:, 2] >= cfg.min_box_size) & (boxes[:, 3] >= cfg.min_box_size)
            boxes, kept_scores = boxes[ok], scores[order][ok]
            keep = _kernels.nms(boxes, kept_scores, cfg.proposal_nms_iou)[: cfg.post_nms_top_n]
            band = bands[name]
            out[band] = [
                Proposal(*boxes[i], score=float(kept_scores[i]), source_band=band)
                for i in keep
            ]
        return out

    # ----------------------------------------------------------- second stage

    def head_forward(
        self, fused: torch.Tensor, band_name: str, boxes: np.ndarray, image_indices: np.ndarray
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """Region scores ((K, n_classes+1) logits) and refinements (K, 4).

        ``boxes`` are image-space (x, y, w, h); ``image_indices`` says which
        batch element each row crops from.
        """
        cfg = self.config
        boxes = np.asarray(boxes, dtype=np.float64).reshape(-1, 4)
        xyxy = np.stack(
            [boxes[:, 0], boxes[:, 1], boxes[:, 0] + boxes[:, 2], boxes[:, 1] + boxes[:, 3]],
            axis=1,
        )
        rois = np.concatenate([np.asarray(image_indices, dtype=np.float64)[:, None], xyxy], axis=1)
        rois_t = torch.as_tensor(rois, dtype=fused.dtype, device=fused.device)
        crops = roi_align(
            fused,
            rois_t,
            output_size=cfg.roi_size,
            spatial_scale=1.0 / cfg.anchor.feature_stride,
            sampling_ratio=2,
        )
        head = self.det_heads[band_name]
        hidden = head["mlp"](crops)
        return head["scores"](hidden), head["refine"](hidden)

    # -------------------------------------------------------------- inference

    @torch.no_grad()
    def detect(
        self,
        images: dict[BandId, np.ndarray],
        mode: str = "test",
    ) -> dict[BandId, list[BoundingBox]]:
        """Full per-band detections for one multi-band frame."""
        cfg = self.config
        bands = {b.name: b for b in images}
        missing = [n for n in cfg.band_names if n not in bands]
        if missing:
            raise ValueError(f"missing band images: {missing}")
        frame_shape = next(iter(images.values())).shape
        tensors = {
            b.name: torch.as_tensor(img, dtype=torch.float32)[None, None]
            for b, img in images.items()
        }
        fused = self.features(tensors)
        rpn_out = self.rpn_raw(fused)
        per_band = self.propose(rpn_out, fused.shape[-2:], frame_shape, 0, bands)
        routed = combine_proposals(per_band, mode)

        results: dict[BandId, list[BoundingBox]] = {}
        for name in cfg.band_names:
            band = bands[name]
            props = routed[band]
            if not props:
                results[band] = []
                continue
            raw = np.array([p.as_tuple() for p in props], dtype=np.float64)
            logits, refine = self.head_forward(
                fused, name, raw, np.zeros(len(props), dtype=np.int64)
            )
            probs = torch.softmax(logits, dim=1).cpu().numpy().astype(np.float64)
            deltas = refine.cpu().numpy().astype(np.float64)
            fg = probs[:, 1:]
            class_ids = fg.argmax(axis=1) + 1
            scores = fg.max(axis=1)
            boxes = clip_boxes(decode_offsets(deltas, raw), frame_shape)
            ok = (
                (scores >= cfg.score_threshold)
                & (boxes[:, 2] >= cfg.min_box_size)
                & (boxes[:, 3] >= cfg.min_box_size)
            )
            boxes, scores, class_ids = boxes[ok], scores[ok], class_ids[ok]
            keep = _kernels.nms(boxes, scores, cfg.final_nms_iou)
            results[band] = [
                BoundingBox(
                    x=float(boxes[i, 0]),
                    y=float(boxes[i, 1]),
                    w=float(boxes[i, 2]),
                    h=float(boxes[i, 3]),
                    class_id=int(class_ids[i]),
                    score=float(min(scores[i], 1.0)),
                )
                for i in keep
            ]
        return results

    # ------------------------------------------------------------ checkpoints

    def _stage_modules(self) -> dict[str, nn.Module]:
        trunk = nn.ModuleDict({"stems": self.stems, "trunk": self.trunk})
        return {
            "feature_extraction": trunk,
            "rpn": self.rpn_heads,
            "detection": self.det_heads,
        }

    def stage_state_bytes(self) -> dict[str, bytes]:
        """Serialize each checkpoint stage's weights independently."""
        out: dict[str, bytes] = {}
        for stage, module in self._stage_modules().items():
            buf = io.BytesIO()
            torch.save(module.state_dict(), buf)
            out[stage] = buf.getvalue()
        return out

    def load_stage_state_bytes(self, blobs: dict[str, bytes]) -> None:
        """Restore stages serialized by :meth:`stage_state_bytes`."""
        modules = self._stage_modules()
        unknown = [s for s in blobs if s not in modules]
        if unknown:
            raise ValueError(f"unknown stages {unknown}; expected subset of {list(STAGES)}")
        for stage, blob in blobs.items():
            state = torch.load(io.BytesIO(blob), weights_only=True)
            modules[stage].load_state_dict(state)
