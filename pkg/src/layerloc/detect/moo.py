"""Stage-wise checkpoint selection for the detector.

The detector is treated as three separately-monitored stages — the shared
feature extractor, the proposal heads, and the detection heads. Each stage
keeps its own best snapshot, replaced only on a strict decrease of that
stage's loss (ties keep the earlier epoch), so the final model assembles
the per-stage minima rather than the single epoch with the best total.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

STAGES = ("feature_extraction", "rpn", "detection")
_WEIGHTS_FILE = "weights.bin"
_META_FILE = "meta.json"


@dataclass(frozen=True)
class StageSnapshot:
    """One stage's best-so-far loss, the epoch that achieved it, and weights."""

    best_loss: float
    epoch: int
    weights: bytes


@dataclass
class StageCheckpointSet:
    """Best snapshot per stage; starts empty and never regresses."""

    snapshots: dict[str, StageSnapshot] = field(default_factory=dict)

    def best_losses(self) -> dict[str, float]:
        return {stage: snap.best_loss for stage, snap in self.snapshots.items()}


def moo_update(
    checkpoints: StageCheckpointSet,
    stage_losses: dict[str, float],
    epoch: int,
    stage_weights: dict[str, bytes],
) -> tuple[StageCheckpointSet, list[str]]:
    """Fold one epoch's stage losses into the running per-stage minima.

    Returns the updated set plus the stages replaced this epoch. A stage is
    replaced only when its loss strictly decreases; an equal loss keeps the
    earlier epoch's snapshot. Unknown stage names are rejected.
    """
    for stage in stage_losses:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}; expected one of {STAGES}")
        if stage not in stage_weights:
            raise ValueError(f"stage {stage!r} has a loss but no weights")
    updated = dict(checkpoints.snapshots)
    improved: list[str] = []
    for stage, loss in stage_losses.items():
        current = updated.get(stage)
        if current is None or loss < current.best_loss:
            updated[stage] = StageSnapshot(float(loss), int(epoch), stage_weights[stage])
            improved.append(stage)
    return StageCheckpointSet(updated), improved


def assemble(checkpoints: StageCheckpointSet) -> dict[str, bytes]:
    """Per-stage weights of the final model; requires every stage present."""
    missing = [s for s in STAGES if s not in checkpoints.snapshots]
    if missing:
        raise ValueError(f"cannot assemble a model; stages never checkpointed: {missing}")
    return {stage: checkpoints.snapshots[stage].weights for stage in STAGES}


def save_stage_checkpoints(checkpoints: StageCheckpointSet, root: Path) -> None:
    """Write each stage under root/<stage>/ as weights.bin + meta.json."""
    root = Path(root)
    for stage, snap in checkpoints.snapshots.items():
        stage_dir = root / stage
        stage_dir.mkdir(parents=True, exist_ok=True)
        (stage_dir / _WEIGHTS_FILE).write_bytes(snap.weights)
        meta = {"best_loss": snap.best_loss, "epoch": snap.epoch}
        (stage_dir / _META_FILE).write_text(json.dumps(meta, sort_keys=True) + "\n")


def load_stage_checkpoints(root: Path) -> StageCheckpointSet:
    """Read back whatever stages exist under root; inverse of save."""
    root = Path(root)
    snapshots: dict[str, StageSnapshot] = {}
    for stage in STAGES:
        stage_dir = root / stage
        if not (stage_dir / _META_FILE).is_file():
            continue
        meta = json.loads((stage_dir / _META_FILE).read_text())
        weights = (stage_dir / _WEIGHTS_FILE).read_bytes()
        snapshots[stage] = StageSnapshot(float(meta["best_loss"]), int(meta["epoch"]), weights)
    return StageCheckpointSet(snapshots)
