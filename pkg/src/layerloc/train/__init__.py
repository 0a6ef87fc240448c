"""Training orchestration: configs, both task loops, recursion."""

from .config import TASK_DEFAULTS, TrainConfig
from .detection import DetectionTrainResult, train_detection
from .recursive import RecursiveResult, RoundReport, recursive_train
from .segmentation import SegTrainResult, train_segmentation

__all__ = [
    "DetectionTrainResult",
    "RecursiveResult",
    "RoundReport",
    "SegTrainResult",
    "TASK_DEFAULTS",
    "TrainConfig",
    "recursive_train",
    "train_detection",
    "train_segmentation",
]
