"""Multi-band segmentation: weighted loss, U-Net model, mask prediction."""

from .loss import (
    DEFAULT_CLASS_WEIGHTS,
    SegmentationLossResult,
    resolve_class_weights,
    segmentation_loss,
    segmentation_loss_from_scores,
)

__all__ = [
    "DEFAULT_CLASS_WEIGHTS",
    "SegmentationLossResult",
    "resolve_class_weights",
    "segmentation_loss",
    "segmentation_loss_from_scores",
]
