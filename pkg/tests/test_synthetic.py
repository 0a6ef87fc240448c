"""Synthetic volumes: slice extraction, component boxes, weak labels, and
end-to-end dataset determinism."""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np
import pytest
from skimage import measure

from layerloc.data.types import SegMask
from layerloc.synthetic.blobs import (
    CLASSES,
    BlobSceneConfig,
    default_gap_config,
    render_sample,
    synthesize_blob_dataset,
)
from layerloc.synthetic.slicing import (
    SliceGapConfig,
    boxes_from_mask,
    build_multilayer_from_volumes,
)
from layerloc.synthetic.weak_labels import (
    WeakLabelConfig,
    disk,
    make_weak_seg_labels,
    weaken_gt_masks,
)


def sphere_volume(depth=16, size=48, center=(8.0, 24.0, 24.0), radius=6.0):
    zz, yy, xx = np.meshgrid(
        np.arange(depth), np.arange(size), np.arange(size), indexing="ij"
    )
    zc, yc, xc = center
    inside = (zz - zc) ** 2 + (yy - yc) ** 2 + (xx - xc) ** 2 <= radius * radius
    return inside.astype(np.int64)


# ------------------------------------------------------------- slicing


@pytest.mark.parametrize("gap", [1, 2, 3])
def test_band_images_are_exact_volume_slices(gap):
    rng = np.random.default_rng(0)
    volume = rng.uniform(size=(12, 20, 20))
    gt = (volume > 0.8).astype(np.int64)
    cfg = SliceGapConfig(gap=gap, z0=1, band_order=("a", "b", "c"))
    sample = build_multilayer_from_volumes(
        {name: volume for name in cfg.band_order}, gt, cfg
    )
    for k, band in enumerate(sample.bands):
        z = 1 + k * gap
        assert np.array_equal(sample.images[band], volume[z])
        assert np.array_equal(sample.masks[band].labels, gt[z])


def test_slice_gap_config_rejects_overdeep_windows():
    cfg = SliceGapConfig(gap=4, z0=2, band_order=("a", "b", "c"))
    with pytest.raises(ValueError, match="depth"):
        cfg.check_depth(10)  # needs indices 2, 6, 10


def test_default_gap_config_centers_the_window():
    cfg = default_gap_config(n_bands=3, gap=2, depth=16)
    assert cfg.band_order == ("band0", "band1", "band2")
    span = 2 * 2
    assert cfg.z0 == (16 - 1 - span) // 2
    assert cfg.slice_indices[-1] < 16


# ------------------------------------------------------ component boxes


def test_boxes_from_mask_against_regionprops_oracle():
    rng = np.random.default_rng(21)
    for _ in range(100):
        labels = (rng.uniform(size=(24, 24)) > 0.82).astype(np.int64)
        got = sorted((b.x, b.y, b.w, b.h) for b in boxes_from_mask(labels))
        # independent route: scikit-image connected components (8-connected)
        cc = measure.label(labels > 0, connectivity=2)
        expected = sorted(
            (
                float(p.bbox[1]),
                float(p.bbox[0]),
                float(p.bbox[3] - p.bbox[1]),
                float(p.bbox[2] - p.bbox[0]),
            )
            for p in measure.regionprops(cc)
        )
        assert got == expected


def test_boxes_from_mask_majority_class_and_empty():
    assert boxes_from_mask(np.zeros((5, 5), dtype=np.int64)) == []
    labels = np.zeros((6, 6), dtype=np.int64)
    labels[1:3, 1:5] = 2
    labels[3:4, 1:5] = 1  # touching the class-2 region -> one component
    (box,) = boxes_from_mask(labels)
    assert box.class_id == 2  # majority wins
    assert (box.x, box.y, box.w, box.h) == (1, 1, 4, 3)


def test_sphere_cross_section_diameter():
    radius, zc = 6.0, 8.0
    volume = sphere_volume(radius=radius, center=(zc, 24.0, 24.0))
    for z in (8, 10, 12):
        dz = z - zc
        expected = 2 * np.sqrt(radius**2 - dz**2) if abs(dz) <= radius else 0.0
        boxes = boxes_from_mask(volume[z])
        if expected == 0.0:
            assert boxes == []
        else:
            (box,) = boxes
            # discrete grid: diameter within one pixel of the continuous value
            assert abs(box.w - expected) <= 2.0
            assert abs(box.h - expected) <= 2.0
            assert box.w == box.h  # circular cross-section


def test_cross_band_iou_non_increasing_with_gap_for_centered_sphere():
    # A sphere centered on the first slice: overlap between the base band's
    # cross-section and the gap-g band's shrinks monotonically as g grows.
    z0 = 4
    volume = sphere_volume(depth=16, center=(float(z0), 24.0, 24.0), radius=6.0)
    base = volume[z0] > 0
    ious = []
    for gap in (1, 2, 3, 4):
        other = volume[z0 + gap] > 0
        inter = float(np.logical_and(base, other).sum())
        union = float(np.logical_or(base, other).sum())
        ious.append(inter / union)
    assert all(a >= b for a, b in zip(ious, ious[1:]))
    assert ious[0] > ious[-1]


# ---------------------------------------------------------- weak labels


def test_weak_labels_never_fire_below_threshold():
    rng = np.random.default_rng(5)
    image = rng.uniform(size=(40, 40))
    cfg = WeakLabelConfig(intensity_percentile=90.0, min_component_area=0)
    mask = make_weak_seg_labels(image, cfg)
    threshold = np.percentile(image, 90.0)
    assert np.all(image[mask.labels == 1] > threshold)


def test_weak_labels_drop_small_components():
    image = np.zeros((30, 30))
    image[2:4, 2:4] = 1.0  # 4 px blob
    image[10:20, 10:20] = 1.0  # 100 px blob
    cfg = WeakLabelConfig(
        intensity_percentile=50.0,
        morph_open_radius=0,
        morph_close_radius=0,
        min_component_area=25,
    )
    mask = make_weak_seg_labels(image, cfg)
    assert mask.labels[3, 3] == 0
    assert mask.labels[15, 15] == 1


def test_weaken_gt_is_strict_subset():
    gt = SegMask(sphere_volume()[8], ("background", "object"))
    weak = weaken_gt_masks(gt, erosion_radius=2)
    assert np.all((weak.labels == 0) | (gt.labels == weak.labels))
    assert weak.labels.sum() < gt.labels.sum()
    assert weak.labels.sum() > 0
    same = weaken_gt_masks(gt, erosion_radius=0)
    assert np.array_equal(same.labels, gt.labels)


def test_disk_structuring_element():
    d = disk(2)
    assert d.shape == (5, 5)
    assert d[2, 2] and d[0, 2] and not d[0, 0]
    assert disk(0).shape == (1, 1)


def test_weak_label_config_validation():
    with pytest.raises(ValueError):
        WeakLabelConfig(intensity_percentile=0.0)
    with pytest.raises(ValueError):
        WeakLabelConfig(morph_open_radius=-1)


# ------------------------------------------------------------- datasets


def _tree_digest(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            digest.update(path.relative_to(root).as_posix().encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


def test_blob_dataset_is_byte_deterministic(tmp_path):
    cfg = BlobSceneConfig(noise_sigma=0.03, seed=4)
    gap = default_gap_config(3, 1, cfg.volume_shape[0])
    synthesize_blob_dataset(cfg, 3, gap, tmp_path / "a")
    synthesize_blob_dataset(cfg, 3, gap, tmp_path / "b")
    assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")
    other = BlobSceneConfig(noise_sigma=0.03, seed=5)
    synthesize_blob_dataset(other, 3, gap, tmp_path / "c")
    assert _tree_digest(tmp_path / "a") != _tree_digest(tmp_path / "c")


def test_render_sample_attenuation_scales_bands():
    cfg = BlobSceneConfig(band_attenuation=(1.0, 0.5, 0.8), seed=2)
    gap = default_gap_config(3, 1, cfg.volume_shape[0])
    sample = render_sample(cfg, gap, 0)
    peaks = [sample.images[b].max() for b in sample.bands]
    assert peaks[1] < peaks[0] and peaks[1] < peaks[2]


def test_blob_dataset_carries_boxes_and_masks(blob_dataset):
    from layerloc.data.manifest import iter_samples

    assert blob_dataset.classes == CLASSES
    saw_foreground = False
    for sample in iter_samples(blob_dataset):
        for band in sample.bands:
            mask = sample.masks[band]
            boxes = sample.detections[band]
            fg = mask.labels > 0
            if fg.any():
                saw_foreground = True
                assert boxes, f"{sample.sample_id}/{band.name}: foreground but no boxes"
                covered = np.zeros_like(fg)
                for b in boxes:
                    covered[int(b.y) : int(b.y + b.h), int(b.x) : int(b.x + b.w)] = True
                assert np.all(covered[fg]), "box union must cover the mask"
            else:
                assert boxes == []
    assert saw_foreground
