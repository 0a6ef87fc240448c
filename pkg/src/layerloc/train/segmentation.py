"""Segmentation training on box-cropped patches with best-validation selection.

Patches come from the ground-truth boxes of every band (each box crops all
bands at identical geometry); the objective is the summed class-weighted
cross-entropy over bands, classes, and pixels. The snapshot returned is the
one with the lowest validation loss (training loss stands in when no
validation split is supplied).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..data.manifest import DatasetManifest
from ..segment.loss import resolve_class_weights
from ..segment.model import MultiBandUNet, SegmenterConfig
from .config import TrainConfig
from .data import build_patch_tensors, load_samples


@dataclass
class SegTrainResult:
    state: bytes
    best_epoch: int
    best_val_loss: float
    history: list[dict] = field(default_factory=list)
    config: SegmenterConfig | None = None

    def best_model(self) -> MultiBandUNet:
        model = MultiBandUNet(self.config)
        model.load_state_dict(torch.load(io.BytesIO(self.state), weights_only=True))
        model.eval()
        return model


def _weighted_ce(
    scores: dict[str, torch.Tensor],
    labels: dict[str, torch.Tensor],
    weights: torch.Tensor,
) -> torch.Tensor:
    """Summed (never averaged) class-weighted cross-entropy over all bands."""
    total = None
    for name, s in scores.items():
        term = F.cross_entropy(s, labels[name], weight=weights, reduction="sum")
        total = term if total is None else total + term
    return total


def _serialize(model: MultiBandUNet) -> bytes:
    buf = io.BytesIO()
    torch.save(model.state_dict(), buf)
    return buf.getvalue()


def train_segmentation(
    cfg: TrainConfig,
    model_config: SegmenterConfig,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest | None = None,
) -> SegTrainResult:
    """Optimize the multi-band U-Net; returns the best-validation snapshot."""
    if cfg.task != "segment":
        raise ValueError(f"cfg.task must be 'segment', got {cfg.task!r}")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = MultiBandUNet(model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    band_names = list(model_config.band_names)

    train_x, train_y = build_patch_tensors(
        load_samples(train_manifest), band_names, model_config.patch_size
    )
    val_x = val_y = None
    if val_manifest is not None:
        val_x, val_y = build_patch_tensors(
            load_samples(val_manifest), band_names, model_config.patch_size
        )
    n_patches = len(train_x[band_names[0]])
    weights = torch.as_tensor(
        resolve_class_weights(model_config.n_classes, cfg.class_weights),
        dtype=torch.float32,
    )

    best_state = _serialize(model)
    best_val = float("inf")
    best_epoch = 0
    history: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(n_patches)
        train_sum = 0.0
        for batch_id, start in enumerate(range(0, n_patches, cfg.batch_size)):
            sel = torch.as_tensor(order[start : start + cfg.batch_size], dtype=torch.long)
            scores = model({n: train_x[n][sel] for n in band_names})
            loss = _weighted_ce(scores, {n: train_y[n][sel] for n in band_names}, weights)
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, batch {batch_id}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            train_sum += float(loss.detach())
        if val_x is not None:
            val_loss = _patch_set_loss(model, val_x, val_y, weights, cfg.batch_size)
        else:
            val_loss = train_sum
        if val_loss < best_val:
            best_val = val_loss
            best_epoch = epoch
            best_state = _serialize(model)
        history.append({"epoch": epoch, "train_loss": train_sum, "val_loss": val_loss})

    if cfg.checkpoint_dir is not None:
        out = Path(cfg.checkpoint_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "weights.bin").write_bytes(best_state)
        (out / "meta.json").write_text(
            json.dumps({"best_loss": best_val, "epoch": best_epoch}, sort_keys=True) + "\n"
        )
    return SegTrainResult(best_state, best_epoch, best_val, history, model_config)


@torch.no_grad()
def _patch_set_loss(
    model: MultiBandUNet,
    xs: dict[str, torch.Tensor],
    ys: dict[str, torch.Tensor],
    weights: torch.Tensor,
    batch_size: int,
) -> float:
    model.eval()
    names = list(xs)
    n = len(xs[names[0]])
    total = 0.0
    for start in range(0, n, batch_size):
        sel = slice(start, start + batch_size)
        scores = model({b: xs[b][sel] for b in names})
        total += float(_weighted_ce(scores, {b: ys[b][sel] for b in names}, weights))
    model.train()
    return total
