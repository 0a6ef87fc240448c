"""Training configuration with task-specific defaults.

Unset learning rate and epoch count fall back to the task defaults:
detection trains at 2e-5 for 3000 epochs, segmentation at 4e-3 for 250.
Desk-scale runs override both; the defaults describe the full-scale recipe.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

TASK_DEFAULTS = {
    "detect": {"learning_rate": 2e-5, "epochs": 3000},
    "segment": {"learning_rate": 4e-3, "epochs": 250},
}


@dataclass(frozen=True)
class TrainConfig:
    """Optimization and bookkeeping knobs shared by both training loops."""

    task: str
    epochs: Optional[int] = None
    learning_rate: Optional[float] = None
    batch_size: int = 4
    validation_fraction: float = 0.2
    seed: int = 0
    max_recursion_rounds: int = 4
    checkpoint_dir: Optional[Path] = None
    balance: float = 10.0  # classification/regression balance in the detection loss
    class_weights: Optional[tuple[float, ...]] = None
    anchor_sample_size: int = 64  # anchors scored per band and image each step
    workers: int = 1

    def __post_init__(self) -> None:
        if self.task not in TASK_DEFAULTS:
            raise ValueError(f"task must be one of {sorted(TASK_DEFAULTS)}, got {self.task!r}")
        defaults = TASK_DEFAULTS[self.task]
        if self.epochs is None:
            object.__setattr__(self, "epochs", defaults["epochs"])
        if self.learning_rate is None:
            object.__setattr__(self, "learning_rate", defaults["learning_rate"])
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ValueError("validation_fraction must lie in [0, 1)")
        if self.max_recursion_rounds < 1:
            raise ValueError("max_recursion_rounds must be >= 1")
        if self.checkpoint_dir is not None:
            object.__setattr__(self, "checkpoint_dir", Path(self.checkpoint_dir))

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)
