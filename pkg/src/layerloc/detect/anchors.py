"""Anchor grid generation for the region-proposal heads.

Anchors are area-preserving across aspect ratios: a base width of 64 with
ratio 1:2 gives w = 64/sqrt(2), h = 64*sqrt(2), so w*h = 64^2 for every
ratio. One anchor set is centered on every feature-grid cell.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AnchorConfig:
    aspect_ratios: tuple[tuple[int, int], ...] = ((1, 1), (1, 2), (2, 1))
    base_widths: tuple[float, ...] = (32.0, 64.0, 128.0, 256.0)
    feature_stride: int = 16

    def __post_init__(self):
        object.__setattr__(self, "aspect_ratios", tuple(tuple(r) for r in self.aspect_ratios))
        object.__setattr__(self, "base_widths", tuple(float(w) for w in self.base_widths))
        if not self.aspect_ratios or not self.base_widths:
            raise ValueError("need at least one aspect ratio and one base width")
        if self.feature_stride < 1:
            raise ValueError("feature stride must be >= 1")

    @property
    def anchors_per_cell(self) -> int:
        return len(self.aspect_ratios) * len(self.base_widths)

    def cell_anchor_shapes(self) -> np.ndarray:
        """(A, 2) array of (w, h) for one grid cell."""
        shapes = []
        for rw, rh in self.aspect_ratios:
            scale = math.sqrt(rw / rh)
            for width in self.base_widths:
                shapes.append((width * scale, width / scale))
        return np.asarray(shapes, dtype=np.float64)


def generate_anchors(cfg: AnchorConfig, feat_h: int, feat_w: int) -> np.ndarray:
    """All anchors for a feat_h x feat_w grid, shape (H*W*A, 4) as (x, y, w, h).

    Cell (i, j) centers its anchors at ((j + 0.5) * stride, (i + 0.5) * stride).
    Row-major over cells, ratios varying slowest within a cell.
    """
    if feat_h < 1 or feat_w < 1:
        raise ValueError("feature grid dimensions must be positive")
    shapes = cfg.cell_anchor_shapes()
    cx = (np.arange(feat_w) + 0.5) * cfg.feature_stride
    cy = (np.arange(feat_h) + 0.5) * cfg.feature_stride
    grid_y, grid_x = np.meshgrid(cy, cx, indexing="ij")
    centers = np.stack([grid_x.ravel(), grid_y.ravel()], axis=1)
    n_cells, n_shapes = len(centers), len(shapes)
    anchors = np.empty((n_cells * n_shapes, 4), dtype=np.float64)
    wh = np.tile(shapes, (n_cells, 1))
    xy = np.repeat(centers, n_shapes, axis=0)
    anchors[:, 0] = xy[:, 0] - wh[:, 0] / 2.0
    anchors[:, 1] = xy[:, 1] - wh[:, 1] / 2.0
    anchors[:, 2] = wh[:, 0]
    anchors[:, 3] = wh[:, 1]
    return anchors
