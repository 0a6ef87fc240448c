"""Detection training loop with stage-wise best checkpointing.

The objective is the per-band sum of a proposal-stage term (objectness
cross-entropy plus balance-weighted smooth-L1 on positive-anchor offsets,
targets always from the band's own ground truth) and a region-head term of
the same shape over that band's own proposals — proposals are never
combined across bands while training. After each epoch the three stages
(shared feature trunk, proposal heads, region heads) are checkpointed
independently at their own best training loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from ..data.manifest import DatasetManifest
from ..data.types import MultiLayerSample
from ..detect.model import DetectorConfig, MultiBandDetector
from ..detect.moo import (
    StageCheckpointSet,
    moo_update,
    save_stage_checkpoints,
)
from ..detect.targets import assign_rpn_targets, encode_offsets
from .. import _kernels
from .config import TrainConfig
from .data import gt_box_arrays, image_batch, load_samples

HEAD_POSITIVE_IOU = 0.5


@dataclass
class DetectionTrainResult:
    checkpoints: StageCheckpointSet
    history: list[dict] = field(default_factory=list)
    config: DetectorConfig | None = None

    def best_model(self) -> MultiBandDetector:
        """Assemble the per-stage best snapshots into one model."""
        from ..detect.moo import assemble

        model = MultiBandDetector(self.config)
        model.load_stage_state_bytes(assemble(self.checkpoints))
        model.eval()
        return model


def _sample_anchor_indices(
    labels: np.ndarray, budget: int, rng: np.random.Generator
) -> np.ndarray:
    """Balanced anchor subset: all positives up to half the budget, rest negative."""
    pos = np.flatnonzero(labels == 1)
    neg = np.flatnonzero(labels == 0)
    n_pos = min(len(pos), budget // 2)
    if len(pos) > n_pos:
        pos = rng.choice(pos, size=n_pos, replace=False)
    n_neg = min(len(neg), budget - len(pos))
    if len(neg) > n_neg:
        neg = rng.choice(neg, size=n_neg, replace=False)
    return np.sort(np.concatenate([pos, neg]))


def _head_targets(
    proposals: np.ndarray,
    gt_boxes: np.ndarray,
    gt_classes: np.ndarray,
    n_classes: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Region-head class targets (0 = background) and offset targets."""
    k = len(proposals)
    cls_target = np.zeros(k, dtype=np.int64)
    reg_target = np.zeros((k, 4), dtype=np.float64)
    if len(gt_boxes) == 0 or k == 0:
        return cls_target, reg_target
    bad = (gt_classes < 1) | (gt_classes > n_classes)
    if bad.any():
        raise ValueError(
            f"ground-truth class ids {sorted(set(gt_classes[bad]))} outside 1..{n_classes}"
        )
    iou = _kernels.pairwise_iou(proposals, gt_boxes)
    best = iou.argmax(axis=1)
    best_iou = iou[np.arange(k), best]
    pos = best_iou >= HEAD_POSITIVE_IOU
    cls_target[pos] = gt_classes[best[pos]]
    if pos.any():
        reg_target[pos] = encode_offsets(gt_boxes[best[pos]], proposals[pos])
    return cls_target, reg_target


def _batch_losses(
    model: MultiBandDetector,
    samples: list[MultiLayerSample],
    indices: np.ndarray,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Proposal-stage and region-head losses for one minibatch."""
    det_cfg = model.config
    batch = [samples[int(i)] for i in indices]
    images = image_batch(samples, indices)
    fused = model.features(images)
    feat_shape = fused.shape[-2:]
    frame_shape = batch[0].frame_shape
    anchors = model.anchors_for(*feat_shape)
    rpn_out = model.rpn_raw(fused)
    per_sample_gt = [gt_box_arrays(s) for s in batch]
    bands = {b.name: b for b in batch[0].images}

    zero = fused.sum() * 0.0  # keeps graph connectivity when a term is empty
    rpn_loss = zero.clone()
    for name in det_cfg.band_names:
        logits, offs = rpn_out[name]
        for i in range(len(batch)):
            gt_boxes, _ = per_sample_gt[i][name]
            labels, targets = assign_rpn_targets(anchors, gt_boxes)
            sel = _sample_anchor_indices(labels, cfg.anchor_sample_size, rng)
            if sel.size == 0:
                continue
            sel_t = torch.as_tensor(sel, dtype=torch.long)
            label_t = torch.as_tensor(labels[sel], dtype=torch.float32)
            n = float(sel.size)
            rpn_loss = rpn_loss + F.binary_cross_entropy_with_logits(
                logits[i, sel_t], label_t, reduction="sum"
            ) / n
            pos = sel[labels[sel] == 1]
            if pos.size:
                pos_t = torch.as_tensor(pos, dtype=torch.long)
                target_t = torch.as_tensor(targets[pos], dtype=offs.dtype)
                rpn_loss = rpn_loss + cfg.balance * F.smooth_l1_loss(
                    offs[i, pos_t], target_t, reduction="sum", beta=1.0
                ) / n

    head_loss = zero.clone()
    with torch.no_grad():
        proposals_per_image = [
            model.propose(rpn_out, feat_shape, frame_shape, i, bands)
            for i in range(len(batch))
        ]
    for name in det_cfg.band_names:
        rois: list[np.ndarray] = []
        img_idx: list[int] = []
        cls_targets: list[np.ndarray] = []
        reg_targets: list[np.ndarray] = []
        for i in range(len(batch)):
            band = bands[name]
            props = np.array(
                [p.as_tuple() for p in proposals_per_image[i][band]], dtype=np.float64
            ).reshape(-1, 4)
            gt_boxes, gt_classes = per_sample_gt[i][name]
            # ground-truth boxes always join the head's training regions
            boxes = np.concatenate([props, gt_boxes]) if len(gt_boxes) else props
            if len(boxes) == 0:
                continue
            ct, rt = _head_targets(boxes, gt_boxes, gt_classes, det_cfg.n_classes)
            rois.append(boxes)
            img_idx.extend([i] * len(boxes))
            cls_targets.append(ct)
            reg_targets.append(rt)
        if not rois:
            continue
        boxes = np.concatenate(rois)
        scores, refine = model.head_forward(fused, name, boxes, np.array(img_idx))
        ct = torch.as_tensor(np.concatenate(cls_targets), dtype=torch.long)
        rt = torch.as_tensor(np.concatenate(reg_targets), dtype=refine.dtype)
        k = float(len(boxes))
        head_loss = head_loss + F.cross_entropy(scores, ct, reduction="sum") / k
        pos = ct > 0
        if bool(pos.any()):
            head_loss = head_loss + cfg.balance * F.smooth_l1_loss(
                refine[pos], rt[pos], reduction="sum", beta=1.0
            ) / k
    return rpn_loss, head_loss


def train_detection(
    cfg: TrainConfig,
    model_config: DetectorConfig,
    train_manifest: DatasetManifest,
    val_manifest: DatasetManifest | None = None,
) -> DetectionTrainResult:
    """Optimize the multi-band detector; returns stage-wise best checkpoints.

    Divergence (a non-finite loss) aborts with the offending epoch and
    batch. Fixed seed plus single-worker loading makes runs bit-repeatable.
    """
    if cfg.task != "detect":
        raise ValueError(f"cfg.task must be 'detect', got {cfg.task!r}")
    torch.manual_seed(cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    model = MultiBandDetector(model_config)
    optimizer = torch.optim.Adam(model.parameters(), lr=cfg.learning_rate)
    samples = load_samples(train_manifest)
    val_samples = load_samples(val_manifest) if val_manifest is not None else None

    checkpoints = StageCheckpointSet()
    history: list[dict] = []
    for epoch in range(1, cfg.epochs + 1):
        model.train()
        order = rng.permutation(len(samples))
        sums = {"rpn": 0.0, "detection": 0.0}
        n_batches = 0
        for batch_id, start in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[start : start + cfg.batch_size]
            rpn_loss, head_loss = _batch_losses(model, samples, idx, cfg, rng)
            loss = rpn_loss + head_loss
            if not torch.isfinite(loss):
                raise RuntimeError(
                    f"training diverged: non-finite loss at epoch {epoch}, batch {batch_id}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            sums["rpn"] += float(rpn_loss.detach())
            sums["detection"] += float(head_loss.detach())
            n_batches += 1
        rpn_mean = sums["rpn"] / n_batches
        head_mean = sums["detection"] / n_batches
        stage_losses = {
            "feature_extraction": rpn_mean + head_mean,
            "rpn": rpn_mean,
            "detection": head_mean,
        }
        checkpoints, improved = moo_update(
            checkpoints, stage_losses, epoch, model.stage_state_bytes()
        )
        record = {
            "epoch": epoch,
            "train_loss": rpn_mean + head_mean,
            "rpn_loss": rpn_mean,
            "detection_loss": head_mean,
            "improved_stages": improved,
        }
        if val_samples is not None:
            record["val_loss"] = _dataset_loss(model, val_samples, cfg)
        history.append(record)

    if cfg.checkpoint_dir is not None:
        save_stage_checkpoints(checkpoints, Path(cfg.checkpoint_dir))
    return DetectionTrainResult(checkpoints, history, model_config)


@torch.no_grad()
def _dataset_loss(
    model: MultiBandDetector, samples: list[MultiLayerSample], cfg: TrainConfig
) -> float:
    model.eval()
    rng = np.random.default_rng(cfg.seed)  # fixed stream: comparable across epochs
    total = 0.0
    n = 0
    for start in range(0, len(samples), cfg.batch_size):
        idx = np.arange(start, min(start + cfg.batch_size, len(samples)))
        rpn_loss, head_loss = _batch_losses(model, samples, idx, cfg, rng)
        total += float(rpn_loss) + float(head_loss)
        n += 1
    model.train()
    return total / n
