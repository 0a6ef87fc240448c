"""Desk-scale directional study: multi-band fusion vs per-band baselines.

Three questions, each answered on synthetic blob scenes at small scale with
fixed seeds:

1. Detection - does a late-concat multi-band detector reach at least the
   per-band single-band F1 on most bands?
2. Segmentation - does the multi-band network beat the mean IoU of
   single-band networks, averaged over bands?
3. Self-training - starting from threshold-derived weak masks, does a second
   training round (on the first round's predictions) improve test IoU?

The study is intentionally small (a few hundred 64x64 scenes, a few dozen
epochs) so a full run finishes on one workstation; it checks direction, not
absolute scores. `python3 -m layerloc.experiments --out results.json` runs it
from the command line.
"""

from __future__ import annotations

import argparse
import io
import json
import time
from dataclasses import dataclass, replace
from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import torch

from .data.manifest import DatasetManifest
from .data.types import MultiLayerSample, SegMask
from .detect.anchors import AnchorConfig
from .detect.fusion import FusionSpec
from .detect.model import DetectorConfig, MultiBandDetector
from .eval.metrics import MatchResult, iou_scores, match_detections, prf1_from_counts
from .segment.model import MultiBandUNet, SegmenterConfig
from .synthetic.blobs import BlobSceneConfig, default_gap_config, synthesize_blob_dataset
from .synthetic.slicing import boxes_from_mask
from .synthetic.weak_labels import WeakLabelConfig, make_weak_seg_labels
from .train.config import TrainConfig
from .train.data import load_samples
from .train.detection import train_detection
from .train.recursive import recursive_train
from .train.segmentation import train_segmentation
from .data.manifest import write_dataset


@dataclass(frozen=True)
class StudyConfig:
    """Scale and scenario for one full study run."""

    seeds: tuple[int, ...] = (101, 202, 303)
    n_train: int = 200
    n_val: int = 24
    n_test: int = 50
    volume_shape: tuple[int, int, int] = (16, 64, 64)
    n_bands: int = 3
    gap: int = 1
    blob_count_range: tuple[int, int] = (1, 3)
    blob_radius_range: tuple[float, float] = (3.0, 6.0)
    band_attenuation: tuple[float, ...] = (1.0, 0.18, 0.75)
    noise_sigma: float = 0.08
    detect_epochs: int = 60
    detect_lr: float = 1e-3
    detect_batch: int = 8
    segment_epochs: int = 20
    segment_lr: float = 4e-3
    segment_batch: int = 16
    weak_percentile: float = 94.0
    weak_min_area: int = 6
    recursion_epochs: int = 15

    @property
    def band_names(self) -> tuple[str, ...]:
        return tuple(f"band{k}" for k in range(self.n_bands))


def _scene_config(cfg: StudyConfig, seed: int) -> BlobSceneConfig:
    return BlobSceneConfig(
        volume_shape=cfg.volume_shape,
        blob_count_range=cfg.blob_count_range,
        blob_radius_range=cfg.blob_radius_range,
        band_attenuation=cfg.band_attenuation,
        noise_sigma=cfg.noise_sigma,
        seed=seed,
    )


def make_study_data(cfg: StudyConfig, seed: int, root: Path) -> dict[str, DatasetManifest]:
    """Disjoint train/val/test blob datasets for one seed."""
    gap_cfg = default_gap_config(cfg.n_bands, cfg.gap, cfg.volume_shape[0])
    sizes = {"train": cfg.n_train, "val": cfg.n_val, "test": cfg.n_test}
    out = {}
    for i, (split, n) in enumerate(sizes.items()):
        out[split] = synthesize_blob_dataset(
            _scene_config(cfg, seed + 1000 * i), n, gap_cfg, root / split, split=split
        )
    return out


# --------------------------------------------------------------- model zoo


def _detector_config(bands: tuple[str, ...]) -> DetectorConfig:
    return DetectorConfig(
        band_names=bands,
        fusion=FusionSpec(stage="late", op="concatenate"),
        anchor=AnchorConfig(
            aspect_ratios=((1, 1),), base_widths=(8.0, 12.0, 16.0), feature_stride=4
        ),
        trunk_channels=12,
        head_channels=32,
        roi_size=5,
        score_threshold=0.5,
        pre_nms_top_n=64,
        post_nms_top_n=4,  # scenes hold at most 3 objects
    )


def _segmenter_config(bands: tuple[str, ...]) -> SegmenterConfig:
    return SegmenterConfig(
        band_names=bands,
        n_classes=2,
        fusion=FusionSpec(stage="late", op="concatenate"),
        depth=2,
        base_channels=8,
        patch_size=32,
    )


def _segmenter_from_state(config: SegmenterConfig, state: bytes) -> MultiBandUNet:
    model = MultiBandUNet(config)
    model.load_state_dict(torch.load(io.BytesIO(state), map_location="cpu"))
    model.eval()
    return model


# -------------------------------------------------------------- evaluation


def detection_f1(model: MultiBandDetector, samples: list[MultiLayerSample]) -> dict[str, float]:
    """Per-band F1 over a sample list, counts pooled across samples."""
    counts: dict[str, list[MatchResult]] = {n: [] for n in model.config.band_names}
    for sample in samples:
        found = model.detect(sample.images, mode="test")
        for band, preds in found.items():
            counts[band.name].append(match_detections(preds, sample.detections[band]))
    out = {}
    for name, matches in counts.items():
        tp = sum(m.tp for m in matches)
        fp = sum(m.fp for m in matches)
        fn = sum(m.fn for m in matches)
        out[name] = prf1_from_counts(tp, fp, fn).f1
    return out


@torch.no_grad()
def segmentation_iou(model: MultiBandUNet, samples: list[MultiLayerSample]) -> dict[str, float]:
    """Per-band mean IoU of whole-frame argmax predictions against GT masks."""
    names = list(model.config.band_names)
    sums = {n: 0.0 for n in names}
    for sample in samples:
        tensors = {
            b.name: torch.as_tensor(img, dtype=torch.float32)[None, None]
            for b, img in sample.images.items()
            if b.name in names
        }
        scores = model(tensors)
        for band in sample.bands:
            if band.name not in names:
                continue
            labels = scores[band.name][0].argmax(dim=0).numpy().astype(np.int64)
            pred = SegMask(labels, sample.masks[band].class_set)
            sums[band.name] += iou_scores(pred, sample.masks[band]).mean
    return {n: s / len(samples) for n, s in sums.items()}


# ------------------------------------------------------------ study pieces


def run_detection_comparison(
    cfg: StudyConfig, seed: int, data: dict[str, DatasetManifest]
) -> dict:
    """Late-concat multi-band detector vs one single-band detector per band."""
    train_cfg = TrainConfig(
        task="detect",
        epochs=cfg.detect_epochs,
        learning_rate=cfg.detect_lr,
        batch_size=cfg.detect_batch,
        seed=seed,
    )
    test_samples = load_samples(data["test"])

    multi = train_detection(train_cfg, _detector_config(cfg.band_names), data["train"])
    multi_f1 = detection_f1(multi.best_model(), test_samples)

    single_f1: dict[str, float] = {}
    for band in cfg.band_names:
        solo = train_detection(train_cfg, _detector_config((band,)), data["train"])
        single_f1.update(detection_f1(solo.best_model(), test_samples))

    wins = sum(multi_f1[b] >= single_f1[b] for b in cfg.band_names)
    return {
        "multi_f1": multi_f1,
        "single_f1": single_f1,
        "bands_where_multi_at_least_single": wins,
        "pass": wins >= 2,
    }


def run_segmentation_comparison(
    cfg: StudyConfig, seed: int, data: dict[str, DatasetManifest]
) -> dict:
    """Multi-band network vs per-band single-band networks, mean IoU."""
    train_cfg = TrainConfig(
        task="segment",
        epochs=cfg.segment_epochs,
        learning_rate=cfg.segment_lr,
        batch_size=cfg.segment_batch,
        seed=seed,
    )
    test_samples = load_samples(data["test"])

    multi = train_segmentation(
        train_cfg, _segmenter_config(cfg.band_names), data["train"], data["val"]
    )
    multi_iou = segmentation_iou(multi.best_model(), test_samples)

    single_iou: dict[str, float] = {}
    for band in cfg.band_names:
        solo = train_segmentation(
            train_cfg, _segmenter_config((band,)), data["train"], data["val"]
        )
        single_iou.update(segmentation_iou(solo.best_model(), test_samples))

    delta = float(
        np.mean([multi_iou[b] - single_iou[b] for b in cfg.band_names])
    )
    return {
        "multi_mean_iou": multi_iou,
        "single_mean_iou": single_iou,
        "mean_delta": delta,
        "pass": delta >= 0.02,
    }


def _weaken(manifest: DatasetManifest, cfg: StudyConfig, root: Path) -> DatasetManifest:
    """Replace GT with threshold-derived weak masks and their component boxes."""
    weak_cfg = WeakLabelConfig(
        intensity_percentile=cfg.weak_percentile,
        morph_open_radius=1,
        morph_close_radius=1,
        min_component_area=cfg.weak_min_area,
    )

    def weakened():
        for sample in load_samples(manifest):
            masks, detections = {}, {}
            for band in sample.bands:
                mask = make_weak_seg_labels(
                    sample.images[band], weak_cfg, class_set=manifest.classes
                )
                masks[band] = mask
                detections[band] = boxes_from_mask(mask.labels)
            yield MultiLayerSample(
                sample_id=sample.sample_id,
                timestamp=sample.timestamp,
                images=sample.images,
                detections=detections,
                masks=masks,
            )

    return write_dataset(root, weakened(), manifest.classes, split=manifest.split)


def run_recursion_study(
    cfg: StudyConfig, seed: int, data: dict[str, DatasetManifest], workdir: Path
) -> dict:
    """Round-1 vs round-2 test IoU when training starts from weak labels."""
    weak_train = _weaken(data["train"], cfg, workdir / "weak_train")
    weak_val = _weaken(data["val"], cfg, workdir / "weak_val")
    train_cfg = TrainConfig(
        task="segment",
        epochs=cfg.recursion_epochs,
        learning_rate=cfg.segment_lr,
        batch_size=cfg.segment_batch,
        seed=seed,
        max_recursion_rounds=2,
    )
    model_cfg = _segmenter_config(cfg.band_names)
    result = recursive_train(
        train_cfg, model_cfg, weak_train, weak_val, out_dir=workdir / "rounds"
    )
    test_samples = load_samples(data["test"])
    by_round = {}
    for report in result.rounds:
        model = _segmenter_from_state(model_cfg, report.state)
        per_band = segmentation_iou(model, test_samples)
        by_round[report.round] = float(np.mean(list(per_band.values())))
    round1 = by_round.get(1, 0.0)
    round2 = by_round.get(2, round1)
    return {
        "rounds_trained": sorted(by_round),
        "round1_test_iou": round1,
        "round2_test_iou": round2,
        "best_round": result.best_round,
        "pass": round2 >= round1,
    }


# ---------------------------------------------------------------- full run


def run_study(
    cfg: StudyConfig = StudyConfig(),
    out_path: Path | None = None,
    parts: tuple[str, ...] = ("detection", "segmentation", "recursion"),
) -> dict:
    """All three comparisons over every seed; majority vote per question."""
    started = time.monotonic()
    per_seed = []
    for seed in cfg.seeds:
        with TemporaryDirectory(prefix=f"study_{seed}_") as tmp:
            tmp_path = Path(tmp)
            data = make_study_data(cfg, seed, tmp_path / "data")
            entry: dict = {"seed": seed}
            if "detection" in parts:
                entry["detection"] = run_detection_comparison(cfg, seed, data)
            if "segmentation" in parts:
                entry["segmentation"] = run_segmentation_comparison(cfg, seed, data)
            if "recursion" in parts:
                entry["recursion"] = run_recursion_study(cfg, seed, data, tmp_path / "rec")
            per_seed.append(entry)

    majority = (len(cfg.seeds) // 2) + 1
    verdicts = {
        part: sum(s[part]["pass"] for s in per_seed) >= majority
        for part in parts
    }
    doc = {
        "config": {
            "seeds": list(cfg.seeds),
            "n_train": cfg.n_train,
            "n_val": cfg.n_val,
            "n_test": cfg.n_test,
            "image_size": list(cfg.volume_shape[1:]),
            "gap": cfg.gap,
            "band_attenuation": list(cfg.band_attenuation),
            "noise_sigma": cfg.noise_sigma,
        },
        "seeds": per_seed,
        "verdicts": verdicts,
        "elapsed_seconds": round(time.monotonic() - started, 1),
    }
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return doc


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        description="Directional study: multi-band fusion vs per-band baselines."
    )
    parser.add_argument("--out", type=Path, default=Path("study_results.json"))
    parser.add_argument(
        "--parts",
        default="detection,segmentation,recursion",
        help="comma-separated subset of {detection,segmentation,recursion}",
    )
    parser.add_argument("--seeds", default=None, help="comma-separated seed override")
    parser.add_argument("--train-size", type=int, default=None)
    parser.add_argument("--test-size", type=int, default=None)
    args = parser.parse_args(argv)

    cfg = StudyConfig()
    if args.seeds:
        cfg = replace(cfg, seeds=tuple(int(s) for s in args.seeds.split(",")))
    if args.train_size:
        cfg = replace(cfg, n_train=args.train_size)
    if args.test_size:
        cfg = replace(cfg, n_test=args.test_size)
    parts = tuple(p.strip() for p in args.parts.split(",") if p.strip())
    doc = run_study(cfg, out_path=args.out, parts=parts)
    for part in parts:
        print(f"{part}: {'pass' if doc['verdicts'][part] else 'fail'}")
    print(f"elapsed: {doc['elapsed_seconds']}s; results in {args.out}")
    return 0 if all(doc["verdicts"].values()) else 1


if __name__ == "__main__":
    raise SystemExit(main())
