"""Multi-band detector network: configuration, feature/RPN shapes, the
anchor-to-head index layout, end-to-end detection output contracts, and
stage-wise weight serialization."""

from __future__ import annotations

import numpy as np
import pytest

torch = pytest.importorskip("torch")

from layerloc.data.types import BandId, BoundingBox
from layerloc.detect.anchors import AnchorConfig
from layerloc.detect.fusion import FusionSpec
from layerloc.detect.model import DetectorConfig, MultiBandDetector, clip_boxes
from layerloc.detect.moo import STAGES

BANDS = ("b0", "b1", "b2")


def tiny_config(**overrides) -> DetectorConfig:
    base = dict(
        band_names=BANDS,
        n_classes=1,
        fusion=FusionSpec(stage="late", op="concatenate"),
        anchor=AnchorConfig(
            aspect_ratios=((1, 1), (1, 2)), base_widths=(8, 16), feature_stride=4
        ),
        trunk_channels=4,
        head_channels=8,
        roi_size=3,
        score_threshold=0.0,
        pre_nms_top_n=64,
        post_nms_top_n=8,
    )
    base.update(overrides)
    return DetectorConfig(**base)


def make_images(seed: int = 0, shape=(16, 16)) -> dict[BandId, np.ndarray]:
    rng = np.random.default_rng(seed)
    return {
        BandId(name, i): rng.uniform(size=shape).astype(np.float64)
        for i, name in enumerate(BANDS)
    }


def as_tensors(images: dict[BandId, np.ndarray]) -> dict[str, torch.Tensor]:
    return {
        b.name: torch.as_tensor(img, dtype=torch.float32)[None, None]
        for b, img in images.items()
    }


# ------------------------------------------------------------- configuration


def test_config_validation():
    with pytest.raises(ValueError, match="unique"):
        tiny_config(band_names=("a", "a"))
    with pytest.raises(ValueError, match="at least one band"):
        tiny_config(band_names=())
    with pytest.raises(ValueError, match="foreground"):
        tiny_config(n_classes=0)
    with pytest.raises(ValueError, match="power of two"):
        tiny_config(anchor=AnchorConfig(feature_stride=6))


def test_clip_boxes_preserves_rows_and_clamps():
    boxes = np.array([[-2.0, -3.0, 6.0, 8.0], [10.0, 10.0, 20.0, 4.0]])
    clipped = clip_boxes(boxes, (12, 16))
    assert clipped.shape == (2, 4)
    assert clipped[0].tolist() == [0.0, 0.0, 4.0, 5.0]
    assert clipped[1].tolist() == [10.0, 10.0, 6.0, 2.0]
    x2 = clipped[:, 0] + clipped[:, 2]
    y2 = clipped[:, 1] + clipped[:, 3]
    assert np.all(x2 <= 16) and np.all(y2 <= 12)


# ------------------------------------------------------------ feature shapes


@pytest.mark.parametrize("stage", ["early", "late"])
@pytest.mark.parametrize("op", ["concatenate", "add"])
def test_fused_feature_map_shape(stage, op):
    cfg = tiny_config(fusion=FusionSpec(stage=stage, op=op))
    model = MultiBandDetector(cfg)
    fused = model.features(as_tensors(make_images()))
    stride = cfg.anchor.feature_stride
    assert fused.shape[0] == 1
    assert fused.shape[-2:] == (16 // stride, 16 // stride)
    assert fused.shape[1] == model.fused_channels
    if stage == "late":
        expected = cfg.trunk_channels * (3 if op == "concatenate" else 1)
        assert model.fused_channels == expected


def test_early_fusion_shares_trunk_weights():
    early = MultiBandDetector(tiny_config(fusion=FusionSpec(stage="early", op="concatenate")))
    late = MultiBandDetector(tiny_config(fusion=FusionSpec(stage="late", op="concatenate")))
    n_early = sum(p.numel() for p in early.stems.parameters()) + sum(
        p.numel() for p in early.trunk.parameters()
    )
    n_late = sum(p.numel() for p in late.stems.parameters()) + sum(
        p.numel() for p in late.trunk.parameters()
    )
    # late fusion replicates the deep blocks per band; early shares them
    assert n_early < n_late
    assert len(late.trunk) == 0


def test_features_requires_every_band():
    model = MultiBandDetector(tiny_config())
    tensors = as_tensors(make_images())
    tensors.pop("b1")
    with pytest.raises(ValueError, match="missing band"):
        model.features(tensors)


# ------------------------------------------------------------------ RPN head


def test_rpn_raw_shapes():
    cfg = tiny_config()
    model = MultiBandDetector(cfg)
    fused = model.features(as_tensors(make_images()))
    h, w = fused.shape[-2:]
    a = cfg.anchor.anchors_per_cell
    out = model.rpn_raw(fused)
    assert set(out) == set(BANDS)
    for logits, offsets in out.values():
        assert tuple(logits.shape) == (1, h * w * a)
        assert tuple(offsets.shape) == (1, h * w * a, 4)


def test_rpn_flattening_aligns_with_anchor_order():
    """Index k of the flattened RPN outputs must describe anchor k of the
    row-major anchor grid: cells scan rows first, anchors innermost."""
    cfg = tiny_config()
    model = MultiBandDetector(cfg)
    a = cfg.anchor.anchors_per_cell
    head = model.rpn_heads["b0"]
    with torch.no_grad():
        head["objectness"].weight.zero_()
        head["objectness"].bias.copy_(torch.arange(a, dtype=torch.float32))
        head["offsets"].weight.zero_()
        head["offsets"].bias.copy_(
            torch.tensor(
                [1000.0 * k + c for k in range(a) for c in range(4)]
            )
        )
    fused = model.features(as_tensors(make_images()))
    logits, offsets = model.rpn_raw(fused)["b0"]
    n_anchors = logits.shape[1]
    ks = torch.arange(n_anchors)
    assert torch.equal(logits[0], (ks % a).to(torch.float32))
    for c in range(4):
        expected = 1000.0 * (ks % a).to(torch.float32) + c
        assert torch.equal(offsets[0, :, c], expected)


def test_anchor_cache_is_consistent():
    model = MultiBandDetector(tiny_config())
    first = model.anchors_for(4, 4)
    assert model.anchors_for(4, 4) is first
    assert first.shape == (4 * 4 * model.config.anchor.anchors_per_cell, 4)


# ---------------------------------------------------------------- detection


def test_detect_output_contract():
    torch.manual_seed(0)
    model = MultiBandDetector(tiny_config()).eval()
    images = make_images()
    results = model.detect(images, mode="test")
    assert set(results) == set(images)
    total = 0
    for band, dets in results.items():
        for det in dets:
            assert isinstance(det, BoundingBox)
            assert 1 <= det.class_id <= model.config.n_classes
            assert det.score is not None and 0.0 <= det.score <= 1.0
            assert det.x >= 0 and det.y >= 0
            assert det.x + det.w <= 16 + 1e-9
            assert det.y + det.h <= 16 + 1e-9
        total += len(dets)
    assert total > 0  # threshold 0 keeps the surviving proposals


def test_detect_scores_descend_within_band():
    torch.manual_seed(1)
    model = MultiBandDetector(tiny_config()).eval()
    for dets in model.detect(make_images(3), mode="test").values():
        scores = [d.score for d in dets]
        assert scores == sorted(scores, reverse=True)


def test_detect_modes_and_missing_band():
    torch.manual_seed(2)
    model = MultiBandDetector(tiny_config()).eval()
    images = make_images(5)
    model.detect(images, mode="train")  # both routing modes accepted
    with pytest.raises(ValueError):
        model.detect(images, mode="validate")
    incomplete = {b: img for b, img in images.items() if b.name != "b2"}
    with pytest.raises(ValueError, match="missing band"):
        model.detect(incomplete)


def test_detect_is_deterministic_in_eval_mode():
    torch.manual_seed(4)
    model = MultiBandDetector(tiny_config()).eval()
    images = make_images(7)
    assert model.detect(images) == model.detect(images)


# -------------------------------------------------------------- checkpoints


def test_stage_state_bytes_round_trip_transfers_behavior():
    torch.manual_seed(10)
    source = MultiBandDetector(tiny_config()).eval()
    torch.manual_seed(99)
    target = MultiBandDetector(tiny_config()).eval()
    images = make_images(11)
    blobs = source.stage_state_bytes()
    assert set(blobs) == set(STAGES)
    target.load_stage_state_bytes(blobs)
    assert target.detect(images) == source.detect(images)
    fused_s = source.features(as_tensors(images))
    fused_t = target.features(as_tensors(images))
    assert torch.equal(fused_s, fused_t)


def test_partial_stage_load_changes_only_that_stage():
    torch.manual_seed(20)
    source = MultiBandDetector(tiny_config()).eval()
    torch.manual_seed(21)
    target = MultiBandDetector(tiny_config()).eval()
    images = as_tensors(make_images(13))
    before = target.features(images)
    target.load_stage_state_bytes({"rpn": source.stage_state_bytes()["rpn"]})
    assert torch.equal(target.features(images), before)  # trunk untouched
    fused = target.features(images)
    got = target.rpn_raw(fused)["b0"][0]
    want = source.rpn_raw(source.features(images))["b0"][0]
    assert got.shape == want.shape


def test_load_stage_state_bytes_rejects_unknown_stage():
    model = MultiBandDetector(tiny_config())
    with pytest.raises(ValueError, match="unknown stage"):
        model.load_stage_state_bytes({"backbone": b""})
