"""Core data model: types, file round-trips, manifests, splits, mirroring,
and the crop-and-resize patch pipeline."""

from __future__ import annotations

import numpy as np
import pytest

from layerloc.data import io as data_io
from layerloc.data.augment import augment, mirror_sample
from layerloc.data.manifest import (
    ManifestError,
    iter_samples,
    load_manifest,
    load_sample,
    split_dataset,
    write_dataset,
)
from layerloc.data.patches import (
    crop_and_resize,
    paste_labels,
    pixel_box,
    resize_labels,
    sample_patches,
)
from layerloc.data.types import (
    AugmentationSpec,
    BandId,
    BoundingBox,
    MultiLayerSample,
    SegMask,
    boxes_to_array,
)

from conftest import make_sample

# ------------------------------------------------------------------ types


def test_bounding_box_rejects_degenerate_extents():
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 0, 5)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 5, -1)
    with pytest.raises(ValueError):
        BoundingBox(0, 0, 5, 5, score=1.5)


def test_band_set_requires_strictly_increasing_layers():
    with pytest.raises(ValueError):
        MultiLayerSample(
            sample_id="x",
            timestamp=0,
            images={BandId("a", 1): np.zeros((4, 4)), BandId("b", 1): np.zeros((4, 4))},
            detections={},
        )


def test_sample_rejects_misaligned_rasters():
    with pytest.raises(ValueError, match="disagree on shape"):
        MultiLayerSample(
            sample_id="x",
            timestamp=0,
            images={BandId("a", 0): np.zeros((4, 4)), BandId("b", 1): np.zeros((5, 4))},
            detections={},
        )


def test_sample_rejects_out_of_bounds_boxes():
    with pytest.raises(ValueError, match="outside"):
        MultiLayerSample(
            sample_id="x",
            timestamp=0,
            images={BandId("a", 0): np.zeros((8, 8))},
            detections={BandId("a", 0): [BoundingBox(5, 5, 4, 4)]},
        )


def test_sample_rejects_mask_shape_mismatch():
    with pytest.raises(ValueError, match="mask shape"):
        MultiLayerSample(
            sample_id="x",
            timestamp=0,
            images={BandId("a", 0): np.zeros((8, 8))},
            detections={},
            masks={BandId("a", 0): SegMask(np.zeros((4, 4), dtype=np.int64), ("bg", "fg"))},
        )


def test_segmask_rejects_labels_outside_class_set():
    with pytest.raises(ValueError):
        SegMask(np.array([[0, 3]], dtype=np.int64), ("bg", "fg"))


def test_boxes_to_array_shapes():
    assert boxes_to_array([]).shape == (0, 4)
    arr = boxes_to_array([BoundingBox(1, 2, 3, 4)])
    assert arr.tolist() == [[1, 2, 3, 4]]


# --------------------------------------------------------------- file IO


def test_raster_round_trip_within_quantization(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(16, 16))
    path = tmp_path / "r.png"
    data_io.write_raster(path, image)
    back = data_io.read_raster(path)
    assert np.abs(back - image).max() <= 0.5 / 65535 + 1e-12


def test_raster_write_read_write_is_stable(tmp_path):
    rng = np.random.default_rng(1)
    image = rng.uniform(size=(8, 8))
    p1, p2 = tmp_path / "a.png", tmp_path / "b.png"
    data_io.write_raster(p1, image)
    first = data_io.read_raster(p1)
    data_io.write_raster(p2, first)
    assert np.array_equal(data_io.read_raster(p2), first)


def test_raster_rejects_out_of_range(tmp_path):
    with pytest.raises(ValueError):
        data_io.write_raster(tmp_path / "x.png", np.array([[0.0, 1.2]]))


def test_boxes_round_trip_exact(tmp_path):
    boxes = [
        BoundingBox(1, 2, 3, 4, class_id=2),
        BoundingBox(0.125, 7.5, 2.25, 3.75, class_id=1, score=0.625),
    ]
    path = tmp_path / "b.csv"
    data_io.write_boxes(path, boxes)
    assert data_io.read_boxes(path) == boxes


def test_empty_box_file_round_trip(tmp_path):
    path = tmp_path / "b.csv"
    data_io.write_boxes(path, [])
    assert data_io.read_boxes(path) == []


def test_mask_round_trip_exact(tmp_path):
    labels = np.array([[0, 1, 2], [2, 1, 0]], dtype=np.int64)
    mask = SegMask(labels, ("bg", "mid", "fg"))
    path = tmp_path / "m.png"
    data_io.write_mask(path, mask)
    back = data_io.read_mask(path, mask.class_set)
    assert np.array_equal(back.labels, labels)
    assert back.class_set == mask.class_set


# -------------------------------------------------------------- manifest


def test_dataset_round_trip(tmp_path):
    samples = [make_sample(seed=i, sample_id=f"s{i}", timestamp=i) for i in range(3)]
    manifest = write_dataset(tmp_path, samples, ("background", "object"))
    loaded = load_manifest(tmp_path)
    assert loaded.band_names == ["band0", "band1", "band2"]
    assert loaded.classes == ("background", "object")
    assert [r.sample_id for r in loaded.samples] == ["s0", "s1", "s2"]
    for original, back in zip(samples, iter_samples(loaded)):
        assert back.sample_id == original.sample_id
        for band in original.bands:
            assert np.abs(back.images[band] - original.images[band]).max() < 1e-4
            assert back.detections[band] == original.detections[band]
            assert np.array_equal(back.masks[band].labels, original.masks[band].labels)


def test_manifest_missing_file_and_bad_json(tmp_path):
    with pytest.raises(ManifestError, match="not found"):
        load_manifest(tmp_path / "nope")
    bad = tmp_path / "dataset.json"
    bad.write_text("{not json")
    with pytest.raises(ManifestError, match="invalid JSON"):
        load_manifest(bad)


def test_manifest_validate_rejects_missing_band_files(tmp_path):
    write_dataset(tmp_path, [make_sample(seed=0)], ("background", "object"))
    (tmp_path / "images" / "s000_band1.png").unlink()
    with pytest.raises(ManifestError):
        load_manifest(tmp_path)


def test_split_sizes_land_exactly_on_published_counts():
    # 266 samples at 0.8/0/0.2 must land exactly on 213 train / 53 test.
    samples = [make_sample(seed=i, sample_id=f"s{i:03d}", shape=(8, 8)) for i in range(266)]
    import tempfile

    with tempfile.TemporaryDirectory() as root:
        manifest = write_dataset(root, samples, ("background", "object"))
        train, val, test = split_dataset(manifest, (0.8, 0.0, 0.2), seed=1)
        assert (len(train.samples), len(val.samples), len(test.samples)) == (213, 0, 53)
        ids = (
            {r.sample_id for r in train.samples}
            | {r.sample_id for r in val.samples}
            | {r.sample_id for r in test.samples}
        )
        assert len(ids) == 266  # disjoint and exhaustive


def test_split_is_deterministic_and_seed_sensitive(blob_dataset):
    a1 = split_dataset(blob_dataset, (0.5, 0.25, 0.25), seed=9)
    a2 = split_dataset(blob_dataset, (0.5, 0.25, 0.25), seed=9)
    b = split_dataset(blob_dataset, (0.5, 0.25, 0.25), seed=10)
    ids = lambda parts: [[r.sample_id for r in m.samples] for m in parts]
    assert ids(a1) == ids(a2)
    assert ids(a1) != ids(b)


def test_split_rejects_bad_fractions(blob_dataset):
    with pytest.raises(ValueError):
        split_dataset(blob_dataset, (0.5, 0.5), seed=0)
    with pytest.raises(ValueError):
        split_dataset(blob_dataset, (0.7, 0.2, 0.2), seed=0)
    with pytest.raises(ValueError, match="empty split"):
        split_dataset(blob_dataset, (0.98, 0.01, 0.01), seed=0)


# ----------------------------------------------------------- augmentation


def test_east_west_box_flip_example():
    sample = make_sample(seed=0, shape=(10, 10))
    band = sample.bands[0]
    sample.detections[band] = [BoundingBox(2, 3, 4, 5, class_id=1)]
    flipped = mirror_sample(sample, ew=True, ns=False)
    box = flipped.detections[band][0]
    assert (box.x, box.y, box.w, box.h) == (4, 3, 4, 5)


@pytest.mark.parametrize("ew,ns", [(True, False), (False, True), (True, True)])
def test_mirror_is_involution(ew, ns):
    sample = make_sample(seed=3)
    twice = mirror_sample(mirror_sample(sample, ew=ew, ns=ns), ew=ew, ns=ns)
    for band in sample.bands:
        assert np.array_equal(twice.images[band], sample.images[band])
        assert twice.detections[band] == sample.detections[band]
        assert np.array_equal(twice.masks[band].labels, sample.masks[band].labels)


def test_mirror_preserves_histograms_and_geometry():
    sample = make_sample(seed=4)
    flipped = mirror_sample(sample, ew=True, ns=True)
    for band in sample.bands:
        assert np.array_equal(
            np.sort(flipped.images[band], axis=None),
            np.sort(sample.images[band], axis=None),
        )
        assert flipped.masks[band].class_histogram().tolist() == (
            sample.masks[band].class_histogram().tolist()
        )
        # mask and boxes move together: the flipped box still covers the
        # flipped mask's foreground exactly
        labels = flipped.masks[band].labels
        ys, xs = np.nonzero(labels)
        box = flipped.detections[band][0]
        assert xs.min() == box.x and xs.max() == box.x + box.w - 1
        assert ys.min() == box.y and ys.max() == box.y + box.h - 1


def test_augment_emits_requested_copies():
    sample = make_sample(seed=5)
    out = augment(sample, AugmentationSpec(north_south=True, east_west=True, both=True))
    assert [s.sample_id for s in out] == ["s005", "s005~ns", "s005~ew", "s005~nsew"]
    assert len(augment(sample, AugmentationSpec())) == 1


# ---------------------------------------------------------------- patches


def test_pixel_box_snaps_outward_and_clips():
    box = pixel_box(BoundingBox(1.3, 2.7, 3.2, 1.1), width=10, height=10)
    assert (box.x, box.y, box.w, box.h) == (1, 2, 4, 2)
    clipped = pixel_box(BoundingBox(8.5, 8.5, 5, 5), width=10, height=10)
    assert (clipped.x, clipped.y) == (8, 8)
    assert clipped.x + clipped.w <= 10 and clipped.y + clipped.h <= 10


def test_crop_and_resize_identity():
    rng = np.random.default_rng(0)
    image = rng.uniform(size=(12, 12))
    out = crop_and_resize(image, BoundingBox(2, 3, 6, 6), target=6)
    assert np.array_equal(out, image[3:9, 2:8])


def test_resize_labels_nearest_and_involution():
    labels = np.arange(16, dtype=np.int64).reshape(4, 4)
    up = resize_labels(labels, (8, 8))
    assert set(np.unique(up)) <= set(range(16))  # no invented labels
    back = resize_labels(up, (4, 4))
    assert np.array_equal(back, labels)


def test_sample_patches_and_paste_round_trip():
    sample = make_sample(seed=6, shape=(32, 32))
    band = sample.bands[0]
    box = sample.detections[band][0]
    patches, grids = sample_patches(sample, box, target=16, with_labels=True)
    assert set(patches) == set(sample.bands)
    assert patches[band].shape == (16, 16)
    assert grids[band].shape == (16, 16)
    # pasting the cropped labels back over the same box restores the region
    frame = np.zeros((32, 32), dtype=np.int64)
    paste_labels(frame, grids[band], pixel_box(box, 32, 32))
    px = pixel_box(box, 32, 32)
    region = frame[px.y : px.y + px.h, px.x : px.x + px.w]
    original = sample.masks[band].labels[px.y : px.y + px.h, px.x : px.x + px.w]
    assert np.array_equal(region, original)


def test_crop_commutes_with_east_west_mirror():
    # On constant and linear rasters, cropping the mirrored image over the
    # mirrored box equals mirroring the cropped patch (tolerance 1e-6).
    h, w = 24, 24
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for image in (np.full((h, w), 0.5), (xx + 2 * yy) / 100.0):
        box = BoundingBox(3, 5, 8, 8)
        direct = crop_and_resize(image, box, target=8)[:, ::-1]
        mirrored_box = BoundingBox(w - box.x - box.w, box.y, box.w, box.h)
        flipped = crop_and_resize(image[:, ::-1], mirrored_box, target=8)
        assert np.allclose(direct, flipped, atol=1e-6)
