"""layerloc: detection and segmentation of 3D objects seen as 2D cuts
across spatially ordered image bands, with per-band results."""

__version__ = "0.1.0"

from ._kernels import BACKEND as kernel_backend

__all__ = ["kernel_backend", "__version__"]
