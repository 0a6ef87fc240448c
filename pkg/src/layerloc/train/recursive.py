"""Recursive weak-label training.

Round 1 trains on the weak masks. Every later round re-initializes the
model from a fresh random stream and trains on the previous round's argmax
predictions, materialized as ordinary mask files (so each round's inputs
are inspectable and bit-exact). Rounds stop when the validation loss fails
to decrease by more than 1e-4 against the previous round, or at the round
cap; the best round by validation loss is returned. Validation keeps its
original weak labels in every round so the series stays comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from ..data.manifest import DatasetManifest, write_dataset
from ..data.types import MultiLayerSample
from ..eval.metrics import iou_scores
from ..segment.model import SegmenterConfig
from ..segment.predict import predict_masks
from .config import TrainConfig
from .data import load_samples
from .segmentation import SegTrainResult, train_segmentation

STOP_TOLERANCE = 1e-4


@dataclass
class RoundReport:
    round: int
    seed: int
    best_epoch: int
    train_loss: float
    val_loss: float
    val_mean_iou: float
    state: bytes = field(repr=False, default=b"")

    def to_document(self) -> dict:
        return {
            "round": self.round,
            "seed": self.seed,
            "best_epoch": self.best_epoch,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_mean_iou": self.val_mean_iou,
        }


@dataclass
class RecursiveResult:
    best_round: int
    rounds: list[RoundReport]
    state: bytes
    config: SegmenterConfig

    def round_report(self, round_index: int) -> RoundReport:
        for r in self.rounds:
            if r.round == round_index:
                return r
        raise KeyError(f"no round {round_index}")


def _round_seed(base_seed: int, round_index: int) -> int:
    """Fresh, reproducible stream per round; round 1 keeps the base seed so a
    single-round run is identical to plain training on the weak labels."""
    if round_index == 1:
        return base_seed
    return int(np.random.SeedSequence([base_seed, round_index]).generate_state(1)[0])


def _val_mean_iou(model, samples: list[MultiLayerSample], classes: tuple[str, ...]) -> float:
    scores = []
    for sample in samples:
        preds = predict_masks(model, sample.images, sample.detections, class_set=classes)
        for band, mask in preds.items():
            scores.append(iou_scores(mask, sample.masks[band]).mean)
    return float(np.mean(scores)) if scores else 0.0


def _materialize_predictions(
    model,
    samples: list[MultiLayerSample],
    classes: tuple[str, ...],
    root: Path,
) -> DatasetManifest:
    """Write a new training set whose masks are the model's predictions."""
    relabeled = []
    for sample in samples:
        preds = predict_masks(model, sample.images, sample.detections, class_set=classes)
        relabeled.append(
            MultiLayerSample(
                sample_id=sample.sample_id,
                timestamp=sample.timestamp,
                images=sample.images,
                detections=sample.detections,
                masks=preds,
            )
        )
    return write_dataset(root, relabeled, classes, split="train")


def recursive_train(
    cfg: TrainConfig,
    model_config: SegmenterConfig,
    weak_manifest: DatasetManifest,
    val_manifest: DatasetManifest,
    out_dir: Path | None = None,
) -> RecursiveResult:
    """Run the round loop; returns the best round's snapshot and reports."""
    if cfg.task != "segment":
        raise ValueError(f"cfg.task must be 'segment', got {cfg.task!r}")
    out_dir = Path(out_dir) if out_dir is not None else (
        Path(cfg.checkpoint_dir) if cfg.checkpoint_dir is not None else None
    )
    val_samples = load_samples(val_manifest)
    train_samples = load_samples(weak_manifest)  # reused for re-labelling rounds

    rounds: list[RoundReport] = []
    current_manifest = weak_manifest
    for round_index in range(1, cfg.max_recursion_rounds + 1):
        seed = _round_seed(cfg.seed, round_index)
        round_cfg = replace(cfg, seed=seed, checkpoint_dir=None)
        result: SegTrainResult = train_segmentation(
            round_cfg, model_config, current_manifest, val_manifest
        )
        model = result.best_model()
        report = RoundReport(
            round=round_index,
            seed=seed,
            best_epoch=result.best_epoch,
            train_loss=result.history[result.best_epoch - 1]["train_loss"],
            val_loss=result.best_val_loss,
            val_mean_iou=_val_mean_iou(model, val_samples, val_manifest.classes),
            state=result.state,
        )
        rounds.append(report)
        if out_dir is not None:
            round_dir = out_dir / f"round_{round_index}"
            round_dir.mkdir(parents=True, exist_ok=True)
            (round_dir / "weights.bin").write_bytes(result.state)
            (round_dir / "meta.json").write_text(
                json.dumps(
                    {"best_loss": result.best_val_loss, "epoch": result.best_epoch},
                    sort_keys=True,
                )
                + "\n"
            )
        stopped = (
            len(rounds) >= 2
            and rounds[-1].val_loss >= rounds[-2].val_loss - STOP_TOLERANCE
        )
        if stopped or round_index == cfg.max_recursion_rounds:
            break
        if out_dir is None:
            raise ValueError("multi-round training needs out_dir to materialize labels")
        labels_root = out_dir / f"round_{round_index + 1}_labels"
        current_manifest = _materialize_predictions(
            model, train_samples, weak_manifest.classes, labels_root
        )

    best = min(rounds, key=lambda r: (r.val_loss, r.round))
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "rounds.json").write_text(
            json.dumps(
                {"best_round": best.round, "rounds": [r.to_document() for r in rounds]},
                indent=2,
                sort_keys=True,
            )
            + "\n"
        )
    return RecursiveResult(best.round, rounds, best.state, model_config)
