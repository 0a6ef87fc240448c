"""Flat dotted-key configuration files and model-config (de)serialization.

Config files are plain text, one `dotted.key=value` per line, `#` comments
allowed; values are parsed as JSON when possible and kept as strings
otherwise. Command-line overrides use the same `key=value` form and are
applied after the file. Model configurations serialize to JSON documents
so a checkpoint directory is self-describing.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Mapping

from .detect.anchors import AnchorConfig
from .detect.fusion import FusionSpec
from .detect.model import DetectorConfig
from .segment.model import SegmenterConfig
from .train.config import TrainConfig

DATA_ROOT_ENV = "LAYERLOC_DATA_ROOT"


class ConfigError(ValueError):
    """Invalid config file or override, reported with the offending key."""


def parse_value(raw: str) -> Any:
    raw = raw.strip()
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_override(item: str) -> tuple[str, Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, _, raw = item.partition("=")
    key = key.strip()
    if not key:
        raise ConfigError(f"override {item!r} has an empty key")
    return key, parse_value(raw)


def read_kv_config(path: str | Path) -> dict[str, Any]:
    """Flat dotted-key config file -> {key: parsed value}."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    out: dict[str, Any] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, value = parse_override(stripped)
        out[key] = value
    return out


def merge_config(
    file_config: Mapping[str, Any], overrides: list[str]
) -> dict[str, Any]:
    merged = dict(file_config)
    for item in overrides:
        key, value = parse_override(item)
        merged[key] = value
    return merged


def scoped(config: Mapping[str, Any], prefix: str) -> dict[str, Any]:
    """Keys under `prefix.` with the prefix stripped."""
    head = prefix + "."
    return {k[len(head):]: v for k, v in config.items() if k.startswith(head)}


def data_root() -> Path:
    return Path(os.environ.get(DATA_ROOT_ENV, "."))


def resolve_data_path(value: str | Path) -> Path:
    """Interpret a dataset path relative to the data-root environment variable."""
    path = Path(value)
    if path.is_absolute():
        return path
    direct = Path(value)
    if direct.exists():
        return direct
    rooted = data_root() / path
    return rooted if rooted.exists() else direct


def write_snapshot(out_dir: str | Path, resolved: Mapping[str, Any]) -> Path:
    """Record the fully-resolved configuration used by a run."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "resolved_config.json"
    path.write_text(json.dumps(dict(resolved), indent=2, sort_keys=True, default=str) + "\n")
    return path


# ----------------------------------------------------------- model configs


def fusion_to_dict(spec: FusionSpec) -> dict:
    return {"stage": spec.stage, "op": spec.op}


def fusion_from_dict(doc: Mapping[str, Any]) -> FusionSpec:
    return FusionSpec(stage=doc.get("stage", "late"), op=doc.get("op", "concatenate"))


def detector_config_to_dict(cfg: DetectorConfig) -> dict:
    return {
        "band_names": list(cfg.band_names),
        "n_classes": cfg.n_classes,
        "fusion": fusion_to_dict(cfg.fusion),
        "anchor": {
            "aspect_ratios": [list(r) for r in cfg.anchor.aspect_ratios],
            "base_widths": list(cfg.anchor.base_widths),
            "feature_stride": cfg.anchor.feature_stride,
        },
        "trunk_channels": cfg.trunk_channels,
        "head_channels": cfg.head_channels,
        "roi_size": cfg.roi_size,
        "score_threshold": cfg.score_threshold,
        "proposal_nms_iou": cfg.proposal_nms_iou,
        "final_nms_iou": cfg.final_nms_iou,
        "pre_nms_top_n": cfg.pre_nms_top_n,
        "post_nms_top_n": cfg.post_nms_top_n,
        "min_box_size": cfg.min_box_size,
    }


def detector_config_from_dict(doc: Mapping[str, Any]) -> DetectorConfig:
    anchor_doc = doc.get("anchor", {})
    anchor = AnchorConfig(
        aspect_ratios=tuple(tuple(r) for r in anchor_doc.get("aspect_ratios", ((1, 1), (1, 2), (2, 1)))),
        base_widths=tuple(anchor_doc.get("base_widths", (32, 64, 128, 256))),
        feature_stride=int(anchor_doc.get("feature_stride", 16)),
    )
    kwargs = {
        k: doc[k]
        for k in (
            "n_classes",
            "trunk_channels",
            "head_channels",
            "roi_size",
            "score_threshold",
            "proposal_nms_iou",
            "final_nms_iou",
            "pre_nms_top_n",
            "post_nms_top_n",
            "min_box_size",
        )
        if k in doc
    }
    return DetectorConfig(
        band_names=tuple(doc["band_names"]),
        fusion=fusion_from_dict(doc.get("fusion", {})),
        anchor=anchor,
        **kwargs,
    )


def segmenter_config_to_dict(cfg: SegmenterConfig) -> dict:
    return {
        "band_names": list(cfg.band_names),
        "n_classes": cfg.n_classes,
        "fusion": fusion_to_dict(cfg.fusion),
        "depth": cfg.depth,
        "base_channels": cfg.base_channels,
        "patch_size": cfg.patch_size,
    }


def segmenter_config_from_dict(doc: Mapping[str, Any]) -> SegmenterConfig:
    kwargs = {
        k: doc[k]
        for k in ("n_classes", "depth", "base_channels", "patch_size")
        if k in doc
    }
    return SegmenterConfig(
        band_names=tuple(doc["band_names"]),
        fusion=fusion_from_dict(doc.get("fusion", {})),
        **kwargs,
    )


def save_model_config(out_dir: str | Path, doc: Mapping[str, Any]) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "model.json"
    path.write_text(json.dumps(dict(doc), indent=2, sort_keys=True) + "\n")
    return path


def load_model_config(ckpt_dir: str | Path) -> dict:
    path = Path(ckpt_dir) / "model.json"
    if not path.is_file():
        raise ConfigError(f"checkpoint directory has no model.json: {ckpt_dir}")
    return json.loads(path.read_text())


def train_config_from_mapping(
    task: str, values: Mapping[str, Any], seed: int | None = None
) -> TrainConfig:
    """Build a TrainConfig from scoped config keys, tolerating absent ones."""
    allowed = {
        "epochs",
        "learning_rate",
        "batch_size",
        "validation_fraction",
        "seed",
        "max_recursion_rounds",
        "balance",
        "anchor_sample_size",
        "workers",
    }
    kwargs: dict[str, Any] = {}
    for key, value in values.items():
        if key in allowed:
            kwargs[key] = value
        elif key == "class_weights":
            kwargs["class_weights"] = tuple(value)
        else:
            raise ConfigError(f"unknown training option: train.{key}")
    if seed is not None:
        kwargs["seed"] = seed
    try:
        return TrainConfig(task=task, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid training configuration: {exc}") from exc
