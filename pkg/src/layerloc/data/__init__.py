from .augment import augment, mirror_sample
from .io import read_boxes, read_mask, read_raster, write_boxes, write_mask, write_raster
from .manifest import (
    BandEntry,
    DatasetManifest,
    ManifestError,
    SampleRecord,
    iter_samples,
    load_manifest,
    load_sample,
    save_manifest,
    split_dataset,
    write_dataset,
)
from .patches import crop_and_resize, pixel_box, resize_labels, sample_patches
from .types import (
    AugmentationSpec,
    BandId,
    BoundingBox,
    MultiLayerSample,
    SegMask,
    boxes_to_array,
)

__all__ = [
    "AugmentationSpec",
    "BandEntry",
    "BandId",
    "BoundingBox",
    "DatasetManifest",
    "ManifestError",
    "MultiLayerSample",
    "SampleRecord",
    "SegMask",
    "augment",
    "boxes_to_array",
    "crop_and_resize",
    "iter_samples",
    "load_manifest",
    "load_sample",
    "mirror_sample",
    "pixel_box",
    "read_boxes",
    "read_mask",
    "read_raster",
    "resize_labels",
    "sample_patches",
    "save_manifest",
    "split_dataset",
    "write_boxes",
    "write_mask",
    "write_raster",
    "write_dataset",
]
