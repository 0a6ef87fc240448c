"""Command-line entry points.

One `layerloc` executable with subcommands covering the full workflow:
synthesize data, derive weak labels, train detection / segmentation /
round-based segmentation, run inference, score predictions, compare two
annotation sources, and serve the annotation API. Every command that
produces artifacts writes a `resolved_config.json` snapshot of the exact
settings used (file config, then `key=value` overrides, then flags).

Exit codes: 0 success, 2 usage error (bad flags or arguments), 1 runtime
failure (bad config contents, missing files, diverged training, ...).
"""

from __future__ import annotations

import argparse
import itertools
import json
import sys
from pathlib import Path
from typing import Any, Mapping

from . import configs
from .configs import ConfigError
from .data.manifest import (
    DatasetManifest,
    ManifestError,
    iter_samples,
    load_manifest,
    save_manifest,
    split_dataset,
    write_dataset,
)
from .data.types import replace as replace_dataclass

_TRAIN_DATA_KEY = "data.train"
_VAL_DATA_KEY = "data.val"


# ------------------------------------------------------------------ helpers


def _resolved(args: argparse.Namespace) -> dict[str, Any]:
    """File config merged with key=value overrides from the command line."""
    file_cfg: Mapping[str, Any] = {}
    if getattr(args, "config", None):
        file_cfg = configs.read_kv_config(args.config)
    return configs.merge_config(file_cfg, list(getattr(args, "overrides", []) or []))


def _load_data(config: Mapping[str, Any], key: str, required: bool = True):
    value = config.get(key)
    if value is None:
        if required:
            raise ConfigError(f"config must set {key}")
        return None
    return load_manifest(configs.resolve_data_path(value))


def _train_config(task: str, config: Mapping[str, Any], args: argparse.Namespace):
    values = dict(configs.scoped(config, "train"))
    if getattr(args, "workers", None) is not None:
        values["workers"] = args.workers
    return configs.train_config_from_mapping(task, values, seed=getattr(args, "seed", None))


def _detector_doc(config: Mapping[str, Any], band_names: list[str]) -> dict:
    model = configs.scoped(config, "model")
    doc: dict[str, Any] = {"band_names": band_names}
    doc["fusion"] = configs.scoped(model, "fusion")
    anchor = configs.scoped(model, "anchor")
    if anchor:
        doc["anchor"] = anchor
    for key, value in model.items():
        if "." in key:
            continue
        doc[key] = value
    return doc


def _segmenter_doc(config: Mapping[str, Any], band_names: list[str]) -> dict:
    model = configs.scoped(config, "model")
    doc: dict[str, Any] = {"band_names": band_names}
    doc["fusion"] = configs.scoped(model, "fusion")
    for key, value in model.items():
        if "." in key:
            continue
        doc[key] = value
    return doc


def _write_history(out_dir: Path, history: list[dict]) -> None:
    (Path(out_dir) / "history.json").write_text(
        json.dumps(history, indent=2, sort_keys=True) + "\n"
    )


def load_detector(ckpt_dir: str | Path):
    """Detector checkpoint directory (model.json + stage subdirs) -> model."""
    from .detect.model import MultiBandDetector
    from .detect.moo import assemble, load_stage_checkpoints

    cfg = configs.detector_config_from_dict(configs.load_model_config(ckpt_dir))
    model = MultiBandDetector(cfg)
    model.load_stage_state_bytes(assemble(load_stage_checkpoints(Path(ckpt_dir))))
    model.eval()
    return model


def load_segmenter(ckpt_dir: str | Path):
    """Segmenter checkpoint directory (model.json + weights.bin) -> model."""
    import torch

    from .segment.model import MultiBandUNet

    cfg = configs.segmenter_config_from_dict(configs.load_model_config(ckpt_dir))
    weights = Path(ckpt_dir) / "weights.bin"
    if not weights.is_file():
        raise ConfigError(f"checkpoint directory has no weights.bin: {ckpt_dir}")
    model = MultiBandUNet(cfg)
    model.load_state_dict(torch.load(weights, weights_only=True))
    model.eval()
    return model


# --------------------------------------------------------------- subcommands


def cmd_build_synthetic(args: argparse.Namespace) -> int:
    from .synthetic.blobs import BlobSceneConfig, default_gap_config, synthesize_blob_dataset

    config = _resolved(args)
    blob = configs.scoped(config, "blob")
    n_bands = args.bands
    attenuation = blob.get(
        "band_attenuation",
        tuple(itertools.islice(itertools.cycle((1.0, 0.5, 0.8)), n_bands)),
    )
    scene = BlobSceneConfig(
        volume_shape=tuple(blob.get("volume_shape", (16, 64, 64))),
        blob_count_range=tuple(blob.get("blob_count_range", (1, 3))),
        blob_radius_range=tuple(blob.get("blob_radius_range", (3.5, 7.0))),
        band_attenuation=tuple(attenuation),
        noise_sigma=float(blob.get("noise_sigma", 0.0)),
        seed=args.seed if args.seed is not None else int(blob.get("seed", 0)),
    )
    gap_cfg = default_gap_config(n_bands, args.gap, scene.volume_shape[0])
    out = Path(args.out)
    manifest = synthesize_blob_dataset(scene, args.samples, gap_cfg, out)
    written = {"dataset": str(out / "dataset.json"), "samples": len(manifest.samples)}
    if args.split:
        fractions = [float(f) for f in args.split.split(",")]
        parts = split_dataset(manifest, fractions, seed=scene.seed)
        for part, name in zip(parts, ("train", "val", "test")):
            if part.samples:
                save_manifest(part, out / f"{name}.json")
                written[name] = len(part.samples)
    configs.write_snapshot(
        out,
        {
            **config,
            "command": "build-synthetic",
            "samples": args.samples,
            "bands": n_bands,
            "gap": args.gap,
            "seed": scene.seed,
            "split": args.split,
        },
    )
    print(json.dumps(written, sort_keys=True))
    return 0


def cmd_gen_weak_labels(args: argparse.Namespace) -> int:
    from .synthetic.slicing import boxes_from_mask
    from .synthetic.weak_labels import WeakLabelConfig, make_weak_seg_labels

    config = _resolved(args)
    weak = configs.scoped(config, "weak")
    wl_cfg = WeakLabelConfig(
        intensity_percentile=float(weak.get("intensity_percentile", 99.0)),
        morph_open_radius=int(weak.get("morph_open_radius", 2)),
        morph_close_radius=int(weak.get("morph_close_radius", 2)),
        min_component_area=int(weak.get("min_component_area", 25)),
    )
    manifest = load_manifest(configs.resolve_data_path(args.data))
    if len(manifest.classes) != 2:
        raise ConfigError(
            "threshold weak labels are binary; dataset declares classes "
            f"{list(manifest.classes)}"
        )

    def weakened():
        for sample in iter_samples(manifest):
            masks, detections = {}, {}
            for band in sample.bands:
                mask = make_weak_seg_labels(
                    sample.images[band], wl_cfg, class_set=manifest.classes
                )
                masks[band] = mask
                detections[band] = boxes_from_mask(mask.labels)
            yield replace_dataclass(sample, detections=detections, masks=masks)

    out = Path(args.out)
    new_manifest = write_dataset(out, weakened(), manifest.classes, split=manifest.split)
    configs.write_snapshot(out, {**config, "command": "gen-weak-labels", "data": str(args.data)})
    print(json.dumps({"dataset": str(out / "dataset.json"), "samples": len(new_manifest.samples)}))
    return 0


def cmd_train_detect(args: argparse.Namespace) -> int:
    from .train import train_detection

    config = _resolved(args)
    train_manifest = _load_data(config, _TRAIN_DATA_KEY)
    val_manifest = _load_data(config, _VAL_DATA_KEY, required=False)
    doc = _detector_doc(config, train_manifest.band_names)
    model_cfg = configs.detector_config_from_dict(doc)
    out = Path(args.out)
    tcfg = _train_config("detect", config, args)
    tcfg = replace_dataclass(tcfg, checkpoint_dir=str(out))
    configs.write_snapshot(out, {**config, "command": "train-detect", "seed": tcfg.seed})
    result = train_detection(tcfg, model_cfg, train_manifest, val_manifest)
    configs.save_model_config(out, configs.detector_config_to_dict(model_cfg))
    _write_history(out, result.history)
    final = result.history[-1] if result.history else {}
    print(json.dumps({"checkpoints": str(out), "epochs": len(result.history), "final": final}))
    return 0


def cmd_train_segment(args: argparse.Namespace) -> int:
    from .train import train_segmentation

    config = _resolved(args)
    train_manifest = _load_data(config, _TRAIN_DATA_KEY)
    val_manifest = _load_data(config, _VAL_DATA_KEY, required=False)
    model_cfg = configs.segmenter_config_from_dict(
        _segmenter_doc(config, train_manifest.band_names)
    )
    out = Path(args.out)
    tcfg = _train_config("segment", config, args)
    tcfg = replace_dataclass(tcfg, checkpoint_dir=str(out))
    configs.write_snapshot(out, {**config, "command": "train-segment", "seed": tcfg.seed})
    result = train_segmentation(tcfg, model_cfg, train_manifest, val_manifest)
    configs.save_model_config(out, configs.segmenter_config_to_dict(model_cfg))
    _write_history(out, result.history)
    print(
        json.dumps(
            {
                "checkpoints": str(out),
                "best_epoch": result.best_epoch,
                "best_val_loss": result.best_val_loss,
            }
        )
    )
    return 0


def cmd_train_recursive(args: argparse.Namespace) -> int:
    from .train import recursive_train

    config = _resolved(args)
    train_manifest = _load_data(config, _TRAIN_DATA_KEY)
    val_manifest = _load_data(config, _VAL_DATA_KEY)
    model_cfg = configs.segmenter_config_from_dict(
        _segmenter_doc(config, train_manifest.band_names)
    )
    out = Path(args.out)
    tcfg = _train_config("segment", config, args)
    configs.write_snapshot(out, {**config, "command": "train-recursive", "seed": tcfg.seed})
    result = recursive_train(tcfg, model_cfg, train_manifest, val_manifest, out_dir=out)
    # Mirror the winning round at the top level so downstream loaders see a
    # plain segmenter checkpoint directory.
    (out / "weights.bin").write_bytes(result.state)
    configs.save_model_config(out, configs.segmenter_config_to_dict(model_cfg))
    best = result.round_report(result.best_round)
    print(
        json.dumps(
            {
                "checkpoints": str(out),
                "best_round": result.best_round,
                "rounds": len(result.rounds),
                "best_val_loss": best.val_loss,
                "best_val_mean_iou": best.val_mean_iou,
            }
        )
    )
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    if args.detector is None and args.segmenter is None:
        raise ConfigError("predict needs --detector, --segmenter, or both")
    config = _resolved(args)
    manifest = load_manifest(configs.resolve_data_path(args.data))
    detector = load_detector(args.detector) if args.detector else None
    segmenter = load_segmenter(args.segmenter) if args.segmenter else None
    if segmenter is not None:
        from .segment.predict import predict_masks

    summary: dict[str, dict[str, list[dict]]] = {}

    def predicted():
        for sample in iter_samples(manifest):
            if detector is not None:
                boxes = detector.detect(sample.images, mode=args.mode)
            else:
                boxes = sample.detections
            masks = None
            if segmenter is not None:
                masks = predict_masks(
                    segmenter, sample.images, boxes, class_set=manifest.classes
                )
            summary[sample.sample_id] = {
                band.name: [
                    {
                        "x": b.x,
                        "y": b.y,
                        "w": b.w,
                        "h": b.h,
                        "class_id": b.class_id,
                        "score": b.score,
                    }
                    for b in band_boxes
                ]
                for band, band_boxes in boxes.items()
            }
            yield replace_dataclass(sample, detections=boxes, masks=masks)

    out = Path(args.out)
    write_dataset(out, predicted(), manifest.classes, split="predictions")
    (out / "predictions.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    configs.write_snapshot(
        out,
        {
            **config,
            "command": "predict",
            "data": str(args.data),
            "detector": args.detector,
            "segmenter": args.segmenter,
            "mode": args.mode,
        },
    )
    print(json.dumps({"dataset": str(out / "dataset.json"), "samples": len(summary)}))
    return 0


def _paired_samples(pred: DatasetManifest, gt: DatasetManifest):
    gt_by_id = {r.sample_id: r for r in gt.samples}
    missing = [r.sample_id for r in pred.samples if r.sample_id not in gt_by_id]
    if missing:
        raise ManifestError(f"predictions carry samples absent from ground truth: {missing[:5]}")
    from .data.manifest import load_sample

    for record in pred.samples:
        yield load_sample(pred, record), load_sample(gt, gt_by_id[record.sample_id])


def cmd_evaluate(args: argparse.Namespace) -> int:
    from .eval.metrics import IoUScores, match_detections
    from .eval.report import EvalReport

    config = _resolved(args)
    pred = load_manifest(configs.resolve_data_path(args.pred))
    gt = load_manifest(configs.resolve_data_path(args.gt))
    if pred.band_names != gt.band_names:
        raise ManifestError(
            f"band sets differ: predictions {pred.band_names} vs ground truth {gt.band_names}"
        )
    do_detect = args.task in ("detect", "both")
    do_segment = args.task in ("segment", "both")
    bands = tuple(gt.band_names)
    report = EvalReport(
        bands=bands,
        class_names=tuple(gt.classes),
        config={**config, "pred": str(args.pred), "gt": str(args.gt), "task": args.task},
    )
    matches: dict[str, list] = {b: [] for b in bands}
    inter: dict[str, dict[int, int]] = {b: {} for b in bands}
    union: dict[str, dict[int, int]] = {b: {} for b in bands}
    segmented = False
    for pred_sample, gt_sample in _paired_samples(pred, gt):
        for band in gt_sample.bands:
            if do_detect:
                matches[band.name].append(
                    match_detections(
                        pred_sample.detections.get(band, []),
                        gt_sample.detections.get(band, []),
                    )
                )
            if (
                do_segment
                and pred_sample.masks
                and gt_sample.masks
                and band in pred_sample.masks
                and band in gt_sample.masks
            ):
                segmented = True
                p = pred_sample.masks[band].labels
                g = gt_sample.masks[band].labels
                for c in range(len(gt.classes)):
                    pc, gc = p == c, g == c
                    inter[band.name][c] = inter[band.name].get(c, 0) + int((pc & gc).sum())
                    union[band.name][c] = union[band.name].get(c, 0) + int((pc | gc).sum())
    if do_detect:
        for band in bands:
            report.add_matches(band, matches[band])
    if do_segment and segmented:
        for band in bands:
            per_class, skipped = {}, []
            for c in sorted(union[band]):
                if union[band][c] == 0:
                    skipped.append(c)
                else:
                    per_class[c] = inter[band][c] / union[band][c]
            mean = sum(per_class.values()) / len(per_class) if per_class else 0.0
            report.segmentation[band] = IoUScores(per_class, mean, tuple(skipped))
    elif do_segment and args.task == "segment":
        raise ManifestError("segmentation evaluation requested but no mask pairs found")
    out = Path(args.out)
    report.save(out)
    configs.write_snapshot(out, report.config | {"command": "evaluate"})
    print(json.dumps({"report": str(out / "report.json")}))
    return 0


def cmd_agreement(args: argparse.Namespace) -> int:
    from .eval.metrics import agreement
    from .eval.report import EvalReport

    config = _resolved(args)
    first = load_manifest(configs.resolve_data_path(args.first))
    second = load_manifest(configs.resolve_data_path(args.second))
    if first.band_names != second.band_names:
        raise ManifestError(
            f"band sets differ: {first.band_names} vs {second.band_names}"
        )
    bands = tuple(first.band_names)
    totals = {b: [] for b in bands}
    for a_sample, b_sample in _paired_samples(first, second):
        if not a_sample.masks or not b_sample.masks:
            raise ManifestError(f"sample {a_sample.sample_id}: both sources need masks")
        for band in a_sample.bands:
            totals[band.name].append(
                agreement(a_sample.masks[band], b_sample.masks[band], class_id=args.class_id)
            )
    report = EvalReport(
        bands=bands,
        config={**config, "first": str(args.first), "second": str(args.second)},
        agreement={b: sum(v) / len(v) for b, v in totals.items() if v},
    )
    out = Path(args.out)
    report.save(out)
    configs.write_snapshot(out, report.config | {"command": "agreement"})
    for band in bands:
        if band in report.agreement:
            print(f"{band}: {report.agreement[band]:.2f}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service.app import create_app

    links = []
    for spec in args.link or []:
        a, sep, b = spec.partition(":")
        if not sep or not a or not b:
            raise ConfigError(f"--link expects band1:band2, got {spec!r}")
        links.append((a, b))
    app = create_app(
        configs.resolve_data_path(args.data),
        store_path=Path(args.store) if args.store else None,
        band_links=links,
        frontend_dir=Path(args.frontend) if args.frontend else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="layerloc",
        description="Multi-band object detection and segmentation workflows.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, config: bool = True) -> None:
        if config:
            p.add_argument("--config", help="flat dotted-key config file")
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--workers", type=int, default=None, help="data-loading workers")
        p.add_argument(
            "overrides",
            nargs="*",
            metavar="key=value",
            help="config overrides applied after the file",
        )

    p = sub.add_parser("build-synthetic", help="render a synthetic multi-band dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--bands", type=int, default=3)
    p.add_argument("--gap", type=int, default=1, help="slice spacing between bands")
    p.add_argument("--split", default=None, help="train,val,test fractions, e.g. 0.8,0.1,0.1")
    common(p)
    p.set_defaults(func=cmd_build_synthetic)

    p = sub.add_parser("gen-weak-labels", help="derive conservative labels from images")
    p.add_argument("--data", required=True, help="source dataset manifest")
    p.add_argument("--out", required=True, help="output dataset directory")
    common(p)
    p.set_defaults(func=cmd_gen_weak_labels)

    for name, func, blurb in (
        ("train-detect", cmd_train_detect, "train the multi-band detector"),
        ("train-segment", cmd_train_segment, "train the multi-band segmenter"),
        ("train-recursive", cmd_train_recursive, "round-based segmenter training on weak labels"),
    ):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True, help="flat dotted-key config file")
        p.add_argument("--out", required=True, help="checkpoint / report directory")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("overrides", nargs="*", metavar="key=value")
        p.set_defaults(func=func)

    p = sub.add_parser("predict", help="run detection / segmentation over a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--detector", default=None, help="detector checkpoint directory")
    p.add_argument("--segmenter", default=None, help="segmenter checkpoint directory")
    p.add_argument("--mode", choices=("train", "test"), default="test",
                   help="proposal sharing policy across bands")
    common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against ground truth")
    p.add_argument("--pred", required=True, help="predictions dataset manifest")
    p.add_argument("--gt", required=True, help="ground-truth dataset manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--task", choices=("detect", "segment", "both"), default="both")
    common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("agreement", help="cross-source mask agreement per band")
    p.add_argument("--first", required=True, help="first annotation dataset")
    p.add_argument("--second", required=True, help="second annotation dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--class-id", type=int, default=1)
    common(p)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("serve", help="serve the annotation API and UI")
    p.add_argument("--data", required=True, help="dataset manifest to annotate")
    p.add_argument("--store", default=None, help="annotation log directory (JSONL per sample)")
    p.add_argument("--link", action="append", default=None, metavar="BAND1:BAND2",
                   help="bands that share box lists (repeatable)")
    p.add_argument("--frontend", default=None, help="static UI directory to mount")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    common(p)
    p.set_defaults(func=cmd_serve)

    return parser


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors itself
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigError, ManifestError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError, KeyError, RuntimeError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
