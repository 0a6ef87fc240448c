"""Training loops: defaults, determinism, divergence handling, best-snapshot
selection, stage-wise checkpointing, and the weak-label round loop."""

from __future__ import annotations

import json

import numpy as np
import pytest

torch = pytest.importorskip("torch")

from conftest import make_sample

from layerloc.data.manifest import load_manifest, write_dataset
from layerloc.detect.anchors import AnchorConfig
from layerloc.detect.model import DetectorConfig, MultiBandDetector
from layerloc.detect.moo import STAGES, load_stage_checkpoints
from layerloc.segment.model import MultiBandUNet, SegmenterConfig
from layerloc.segment.predict import predict_masks
from layerloc.train.config import TASK_DEFAULTS, TrainConfig
from layerloc.train.data import (
    build_patch_tensors,
    gt_box_arrays,
    image_batch,
    load_samples,
    union_boxes,
)
from layerloc.train.detection import train_detection
from layerloc.train.recursive import recursive_train
from layerloc.train.segmentation import train_segmentation

CLASSES = ("background", "object")
BAND_NAMES = ("band0", "band1", "band2")


@pytest.fixture(scope="module")
def datasets(tmp_path_factory):
    root = tmp_path_factory.mktemp("traindata")
    train = write_dataset(
        root / "train", [make_sample(seed=i) for i in range(4)], CLASSES, split="train"
    )
    val = write_dataset(
        root / "val", [make_sample(seed=10 + i) for i in range(2)], CLASSES, split="val"
    )
    return train, val


def det_config() -> DetectorConfig:
    return DetectorConfig(
        band_names=BAND_NAMES,
        n_classes=1,
        anchor=AnchorConfig(
            aspect_ratios=((1, 1), (1, 2)), base_widths=(8, 12), feature_stride=8
        ),
        trunk_channels=4,
        head_channels=8,
        roi_size=3,
        pre_nms_top_n=32,
        post_nms_top_n=4,
    )


def seg_config(**overrides) -> SegmenterConfig:
    base = dict(band_names=BAND_NAMES, n_classes=2, depth=2, base_channels=4, patch_size=8)
    base.update(overrides)
    return SegmenterConfig(**base)


def det_cfg(**overrides) -> TrainConfig:
    base = dict(task="detect", epochs=2, learning_rate=1e-3, batch_size=2, seed=7,
                anchor_sample_size=16)
    base.update(overrides)
    return TrainConfig(**base)


def seg_cfg(**overrides) -> TrainConfig:
    base = dict(task="segment", epochs=3, learning_rate=1e-3, batch_size=4, seed=7)
    base.update(overrides)
    return TrainConfig(**base)


# ------------------------------------------------------------ configuration


def test_task_defaults():
    assert TASK_DEFAULTS["detect"] == {"learning_rate": 2e-5, "epochs": 3000}
    assert TASK_DEFAULTS["segment"] == {"learning_rate": 4e-3, "epochs": 250}
    detect = TrainConfig(task="detect")
    assert (detect.learning_rate, detect.epochs) == (2e-5, 3000)
    segment = TrainConfig(task="segment")
    assert (segment.learning_rate, segment.epochs) == (4e-3, 250)
    custom = TrainConfig(task="detect", epochs=10, learning_rate=0.5)
    assert (custom.learning_rate, custom.epochs) == (0.5, 10)


def test_train_config_validation():
    with pytest.raises(ValueError, match="task"):
        TrainConfig(task="classify")
    with pytest.raises(ValueError, match="epochs"):
        TrainConfig(task="detect", epochs=0)
    with pytest.raises(ValueError, match="learning_rate"):
        TrainConfig(task="detect", learning_rate=-1.0)
    with pytest.raises(ValueError, match="batch_size"):
        TrainConfig(task="detect", batch_size=0)
    with pytest.raises(ValueError, match="validation_fraction"):
        TrainConfig(task="detect", validation_fraction=1.0)
    with pytest.raises(ValueError, match="recursion"):
        TrainConfig(task="segment", max_recursion_rounds=0)
    assert TrainConfig(task="detect").with_seed(42).seed == 42


def test_training_loops_reject_mismatched_task(datasets):
    train, val = datasets
    with pytest.raises(ValueError, match="task"):
        train_detection(seg_cfg(), det_config(), train)
    with pytest.raises(ValueError, match="task"):
        train_segmentation(det_cfg(), seg_config(), train)
    with pytest.raises(ValueError, match="task"):
        recursive_train(det_cfg(), seg_config(), train, val)


# ------------------------------------------------------------- data staging


def test_data_staging_helpers(datasets):
    train, _ = datasets
    samples = load_samples(train)
    assert len(samples) == 4
    batch = image_batch(samples, np.array([0, 2]))
    assert set(batch) == set(BAND_NAMES)
    assert tuple(batch["band0"].shape) == (2, 1, 32, 32)
    arrays = gt_box_arrays(samples[0])
    assert arrays["band1"][0].shape == (1, 4)
    assert arrays["band1"][1].tolist() == [1]
    assert len(union_boxes(samples[0])) == 3  # one box from each band
    xs, ys = build_patch_tensors(samples, list(BAND_NAMES), 8)
    n = len(xs["band0"])
    assert n == 4 * 3  # every box crops every sample once
    assert tuple(xs["band0"].shape) == (n, 1, 8, 8)
    assert tuple(ys["band0"].shape) == (n, 8, 8)
    assert ys["band0"].dtype == torch.long


def test_patch_tensors_accept_band_subset(datasets):
    # single-band baselines train on multi-band samples, reading one band
    train, _ = datasets
    samples = load_samples(train)
    xs, ys = build_patch_tensors(samples, ["band1"], 8)
    assert set(xs) == {"band1"} and set(ys) == {"band1"}
    assert len(xs["band1"]) == 4 * 3  # still one patch per union box
    full, _ = build_patch_tensors(samples, list(BAND_NAMES), 8)
    assert torch.equal(xs["band1"], full["band1"])


def test_load_samples_validation(tmp_path, datasets):
    train, _ = datasets
    with pytest.raises(ValueError, match="no samples"):
        from layerloc.data.manifest import DatasetManifest

        load_samples(DatasetManifest(tmp_path, train.bands, CLASSES, [], None))


# --------------------------------------------------------- detection training


def test_detection_training_is_deterministic(datasets):
    train, val = datasets
    a = train_detection(det_cfg(), det_config(), train, val)
    b = train_detection(det_cfg(), det_config(), train, val)
    assert a.history == b.history
    for stage in STAGES:
        assert a.checkpoints.snapshots[stage].weights == b.checkpoints.snapshots[stage].weights


def test_detection_checkpoints_track_stage_minima(datasets):
    train, val = datasets
    result = train_detection(det_cfg(epochs=3), det_config(), train, val)
    assert [h["epoch"] for h in result.history] == [1, 2, 3]
    by_stage = {
        "feature_extraction": [h["rpn_loss"] + h["detection_loss"] for h in result.history],
        "rpn": [h["rpn_loss"] for h in result.history],
        "detection": [h["detection_loss"] for h in result.history],
    }
    for stage, series in by_stage.items():
        snap = result.checkpoints.snapshots[stage]
        assert snap.best_loss == pytest.approx(min(series), rel=1e-9)
        assert snap.epoch == int(np.argmin(series)) + 1
    for h in result.history:
        assert "val_loss" in h and np.isfinite(h["val_loss"])
        assert h["train_loss"] == pytest.approx(h["rpn_loss"] + h["detection_loss"])


def test_detection_checkpoint_dir_and_best_model(tmp_path, datasets):
    train, _ = datasets
    result = train_detection(
        det_cfg(checkpoint_dir=tmp_path / "ckpt"), det_config(), train
    )
    loaded = load_stage_checkpoints(tmp_path / "ckpt")
    assert loaded.best_losses() == result.checkpoints.best_losses()
    model = result.best_model()
    assert isinstance(model, MultiBandDetector)
    sample = make_sample(seed=50)
    detections = model.detect(sample.images, mode="test")
    assert set(detections) == set(sample.images)


def test_detection_divergence_aborts_with_location(datasets, monkeypatch):
    train, _ = datasets

    def bad_losses(*args, **kwargs):
        nan = torch.tensor(float("nan"), requires_grad=True)
        return nan, torch.tensor(0.0)

    monkeypatch.setattr("layerloc.train.detection._batch_losses", bad_losses)
    with pytest.raises(RuntimeError, match=r"training diverged: non-finite loss at epoch 1, batch 0"):
        train_detection(det_cfg(), det_config(), train)


# ------------------------------------------------------ segmentation training


def test_segmentation_training_is_deterministic(datasets):
    train, val = datasets
    a = train_segmentation(seg_cfg(), seg_config(), train, val)
    b = train_segmentation(seg_cfg(), seg_config(), train, val)
    assert a.history == b.history
    assert a.state == b.state
    assert a.best_epoch == b.best_epoch


def test_segmentation_keeps_lowest_validation_snapshot(datasets, tmp_path):
    train, val = datasets
    result = train_segmentation(
        seg_cfg(epochs=4, checkpoint_dir=tmp_path / "seg"), seg_config(), train, val
    )
    vals = [h["val_loss"] for h in result.history]
    assert result.best_val_loss == min(vals)
    assert result.best_epoch == vals.index(min(vals)) + 1
    meta = json.loads((tmp_path / "seg" / "meta.json").read_text())
    assert meta == {"best_loss": result.best_val_loss, "epoch": result.best_epoch}
    saved = (tmp_path / "seg" / "weights.bin").read_bytes()
    assert saved == result.state
    model = result.best_model()
    assert isinstance(model, MultiBandUNet)


def test_segmentation_without_validation_uses_train_loss(datasets):
    train, _ = datasets
    result = train_segmentation(seg_cfg(), seg_config(), train)
    for h in result.history:
        assert h["val_loss"] == h["train_loss"]


def test_segmentation_loss_decreases_on_tiny_dataset(datasets):
    train, _ = datasets
    result = train_segmentation(seg_cfg(epochs=20, learning_rate=5e-3), seg_config(), train)
    losses = [h["train_loss"] for h in result.history]
    assert losses[-1] < losses[0]
    assert min(losses) < 0.75 * losses[0]


def test_segmentation_divergence_aborts_with_location(datasets, monkeypatch):
    train, _ = datasets

    def bad_ce(*args, **kwargs):
        return torch.tensor(float("nan"), requires_grad=True)

    monkeypatch.setattr("layerloc.train.segmentation._weighted_ce", bad_ce)
    with pytest.raises(RuntimeError, match=r"training diverged: non-finite loss at epoch 1, batch 0"):
        train_segmentation(seg_cfg(), seg_config(), train)


# ------------------------------------------------------------ round training


class ScriptedResult:
    """Stand-in for a finished training run with a scripted validation loss."""

    def __init__(self, state: bytes, val_loss: float):
        self.state = state
        self.best_epoch = 2
        self.best_val_loss = val_loss
        self.history = [
            {"epoch": 1, "train_loss": 9.0, "val_loss": val_loss + 1},
            {"epoch": 2, "train_loss": 4.5, "val_loss": val_loss},
        ]

    def best_model(self):
        return object()


@pytest.fixture
def scripted_rounds(monkeypatch, datasets):
    """Drive recursive_train with scripted per-round validation losses."""
    train, val = datasets
    calls = {"seeds": [], "materialized": []}

    def install(val_losses):
        remaining = [
            ScriptedResult(f"round{i + 1}".encode(), v) for i, v in enumerate(val_losses)
        ]

        def fake_train(cfg, model_config, train_manifest, val_manifest=None):
            calls["seeds"].append(cfg.seed)
            return remaining.pop(0)

        def fake_iou(model, samples, classes):
            return 0.5

        def fake_materialize(model, samples, classes, root):
            calls["materialized"].append(root)
            return train

        monkeypatch.setattr("layerloc.train.recursive.train_segmentation", fake_train)
        monkeypatch.setattr("layerloc.train.recursive._val_mean_iou", fake_iou)
        monkeypatch.setattr(
            "layerloc.train.recursive._materialize_predictions", fake_materialize
        )
        return calls

    return install, train, val


def test_rounds_stop_when_validation_stalls(scripted_rounds, tmp_path):
    install, train, val = scripted_rounds
    calls = install([5.0, 3.0, 3.00005, 1.0])  # round 4 must never run
    cfg = seg_cfg(max_recursion_rounds=4, seed=3)
    result = recursive_train(cfg, seg_config(), train, val, out_dir=tmp_path)
    assert [r.round for r in result.rounds] == [1, 2, 3]
    assert result.best_round == 2
    assert result.state == b"round2"
    # round 1 reuses the base seed; later rounds draw fresh reproducible seeds
    assert calls["seeds"][0] == 3
    expected_r2 = int(np.random.SeedSequence([3, 2]).generate_state(1)[0])
    assert calls["seeds"][1] == expected_r2
    assert len(set(calls["seeds"])) == 3
    doc = json.loads((tmp_path / "rounds.json").read_text())
    assert doc["best_round"] == 2
    assert [r["round"] for r in doc["rounds"]] == [1, 2, 3]
    assert doc["rounds"][1]["val_loss"] == 3.0
    assert (tmp_path / "round_2" / "weights.bin").read_bytes() == b"round2"


def test_rounds_stop_immediately_when_validation_rises(scripted_rounds, tmp_path):
    install, train, val = scripted_rounds
    install([2.0, 2.5, 0.1])
    result = recursive_train(
        seg_cfg(max_recursion_rounds=3), seg_config(), train, val, out_dir=tmp_path
    )
    assert [r.round for r in result.rounds] == [1, 2]
    assert result.best_round == 1
    assert result.state == b"round1"


def test_rounds_run_to_cap_while_improving(scripted_rounds, tmp_path):
    install, train, val = scripted_rounds
    calls = install([5.0, 4.0, 3.0])
    result = recursive_train(
        seg_cfg(max_recursion_rounds=3), seg_config(), train, val, out_dir=tmp_path
    )
    assert [r.round for r in result.rounds] == [1, 2, 3]
    assert result.best_round == 3
    assert len(calls["materialized"]) == 2  # labels rebuilt before rounds 2 and 3


def test_single_round_never_materializes_labels(scripted_rounds, tmp_path):
    install, train, val = scripted_rounds
    calls = install([5.0])
    result = recursive_train(
        seg_cfg(max_recursion_rounds=1), seg_config(), train, val, out_dir=tmp_path
    )
    assert result.best_round == 1
    assert calls["materialized"] == []


def test_multi_round_requires_a_working_directory(scripted_rounds):
    install, train, val = scripted_rounds
    install([5.0, 4.0])
    with pytest.raises(ValueError, match="out_dir"):
        recursive_train(seg_cfg(max_recursion_rounds=2), seg_config(), train, val)


def test_single_round_equals_plain_training(datasets, tmp_path):
    train, val = datasets
    cfg = seg_cfg(max_recursion_rounds=1, seed=9)
    recursive = recursive_train(cfg, seg_config(), train, val, out_dir=tmp_path / "r")
    plain = train_segmentation(cfg, seg_config(), train, val)
    assert recursive.rounds[0].val_loss == plain.best_val_loss
    assert recursive.state == plain.state
    assert recursive.rounds[0].best_epoch == plain.best_epoch


def test_round_two_trains_on_round_one_predictions(datasets, tmp_path):
    train, val = datasets
    cfg = seg_cfg(epochs=2, max_recursion_rounds=2, seed=5)
    config = seg_config()
    result = recursive_train(cfg, config, train, val, out_dir=tmp_path)
    assert len(result.rounds) == 2
    labels_root = tmp_path / "round_2_labels"
    assert labels_root.is_dir()
    relabeled = load_manifest(labels_root)

    round1 = MultiBandUNet(config)
    round1.load_state_dict(
        torch.load((tmp_path / "round_1" / "weights.bin"), weights_only=True)
    )
    round1.eval()
    originals = {s.sample_id: s for s in load_samples(train)}
    for sample in load_samples(relabeled):
        source = originals[sample.sample_id]
        expected = predict_masks(
            round1, source.images, source.detections, class_set=train.classes
        )
        for band, mask in sample.masks.items():
            assert np.array_equal(mask.labels, expected[band].labels)
