"""Multi-band object detection: anchors, fusion, proposals, losses, model."""

from .anchors import AnchorConfig, generate_anchors
from .fusion import FusionSpec, fuse_features
from .loss import (
    BandDetectionBatch,
    DetectionBatch,
    DetectionLossResult,
    detection_loss,
)
from .moo import (
    STAGES,
    StageCheckpointSet,
    StageSnapshot,
    assemble,
    load_stage_checkpoints,
    moo_update,
    save_stage_checkpoints,
)
from .proposals import Proposal, combine_proposals
from .suppression import nms_boxes
from .targets import (
    IGNORE,
    NEGATIVE,
    POSITIVE,
    assign_rpn_targets,
    decode_offsets,
    encode_offsets,
)

__all__ = [
    "AnchorConfig",
    "BandDetectionBatch",
    "DetectionBatch",
    "DetectionLossResult",
    "FusionSpec",
    "IGNORE",
    "NEGATIVE",
    "POSITIVE",
    "Proposal",
    "STAGES",
    "StageCheckpointSet",
    "StageSnapshot",
    "assemble",
    "assign_rpn_targets",
    "combine_proposals",
    "decode_offsets",
    "detection_loss",
    "encode_offsets",
    "fuse_features",
    "generate_anchors",
    "load_stage_checkpoints",
    "moo_update",
    "nms_boxes",
    "save_stage_checkpoints",
]
