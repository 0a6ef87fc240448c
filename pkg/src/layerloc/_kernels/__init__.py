"""Geometry kernel backend selection.

The compiled Cython extension is used when it imported cleanly; otherwise the
pure NumPy reference implementation takes over. ``LAYERLOC_KERNELS=reference``
forces the fallback (useful for benchmarking and debugging),
``LAYERLOC_KERNELS=native`` makes a missing extension a hard error.
"""

import os

from . import reference

_requested = os.environ.get("LAYERLOC_KERNELS", "auto").lower()

if _requested == "reference":
    _impl = reference
    BACKEND = "reference"
else:
    try:
        from . import _native as _impl  # type: ignore[no-redef]

        BACKEND = "native"
    except ImportError:
        if _requested == "native":
            raise
        _impl = reference
        BACKEND = "reference"

pairwise_intersection = _impl.pairwise_intersection
pairwise_iou = _impl.pairwise_iou
nms = _impl.nms
crop_resize_bilinear = _impl.crop_resize_bilinear

__all__ = [
    "BACKEND",
    "pairwise_intersection",
    "pairwise_iou",
    "nms",
    "crop_resize_bilinear",
    "reference",
]
