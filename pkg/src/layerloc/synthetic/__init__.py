from .blobs import (
    CLASSES,
    BlobSceneConfig,
    default_gap_config,
    render_blob_scene,
    render_sample,
    synthesize_blob_dataset,
)
from .slicing import SliceGapConfig, boxes_from_mask, build_multilayer_from_volumes
from .weak_labels import WeakLabelConfig, disk, make_weak_seg_labels, weaken_gt_masks

__all__ = [
    "CLASSES",
    "BlobSceneConfig",
    "SliceGapConfig",
    "WeakLabelConfig",
    "boxes_from_mask",
    "build_multilayer_from_volumes",
    "default_gap_config",
    "disk",
    "make_weak_seg_labels",
    "render_blob_scene",
    "render_sample",
    "synthesize_blob_dataset",
    "weaken_gt_masks",
]
