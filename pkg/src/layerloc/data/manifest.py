"""Dataset manifests: a `dataset.json` document describing bands, the class
palette, and per-sample file references (raster, boxes, optional mask per
band). All invariants are checked eagerly at load time so that training and
evaluation can trust a loaded manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import io
from .types import BandId, MultiLayerSample, check_band_set

MANIFEST_NAME = "dataset.json"


class ManifestError(ValueError):
    """Raised for schema violations, band mismatches, or missing files."""


@dataclass
class BandEntry:
    image: str
    boxes: str
    mask: Optional[str] = None


@dataclass
class SampleRecord:
    sample_id: str
    timestamp: str | int
    bands: dict[str, BandEntry]


@dataclass
class DatasetManifest:
    root: Path
    bands: list[BandId]
    classes: tuple[str, ...]
    samples: list[SampleRecord] = field(default_factory=list)
    split: Optional[str] = None

    def __post_init__(self):
        self.root = Path(self.root)
        self.classes = tuple(self.classes)
        check_band_set(self.bands)

    @property
    def band_names(self) -> list[str]:
        return [b.name for b in sorted(self.bands)]

    def band_named(self, name: str) -> BandId:
        for band in self.bands:
            if band.name == name:
                return band
        raise KeyError(f"manifest has no band named {name!r}")

    def subset(self, sample_ids: Iterable[str], split: Optional[str] = None) -> "DatasetManifest":
        wanted = set(sample_ids)
        records = [r for r in self.samples if r.sample_id in wanted]
        return DatasetManifest(self.root, list(self.bands), self.classes, records, split)

    def validate(self) -> None:
        expected = set(self.band_names)
        seen_ids = set()
        for record in self.samples:
            if record.sample_id in seen_ids:
                raise ManifestError(f"duplicate sample id {record.sample_id!r}")
            seen_ids.add(record.sample_id)
            present = set(record.bands)
            if present != expected:
                missing = sorted(expected - present)
                extra = sorted(present - expected)
                raise ManifestError(
                    f"sample {record.sample_id!r}: band mismatch"
                    + (f", missing {missing}" if missing else "")
                    + (f", undeclared {extra}" if extra else "")
                )
            for name, entry in record.bands.items():
                for label, rel in (("image", entry.image), ("boxes", entry.boxes), ("mask", entry.mask)):
                    if rel is None:
                        continue
                    path = self.root / rel
                    if not path.exists():
                        raise ManifestError(
                            f"sample {record.sample_id!r} band {name!r}: {label} file missing: {path}"
                        )


def to_document(manifest: DatasetManifest) -> dict:
    doc = {
        "bands": [{"name": b.name, "layer_index": b.layer_index} for b in sorted(manifest.bands)],
        "classes": list(manifest.classes),
        "samples": [
            {
                "id": r.sample_id,
                "timestamp": r.timestamp,
                "bands": {
                    name: {
                        k: v
                        for k, v in (("image", e.image), ("boxes", e.boxes), ("mask", e.mask))
                        if v is not None
                    }
                    for name, e in sorted(r.bands.items())
                },
            }
            for r in manifest.samples
        ],
    }
    if manifest.split is not None:
        doc["split"] = manifest.split
    return doc


def save_manifest(manifest: DatasetManifest, path: Optional[str | Path] = None) -> Path:
    out = Path(path) if path is not None else manifest.root / MANIFEST_NAME
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(to_document(manifest), indent=2, sort_keys=True) + "\n")
    return out


def load_manifest(path: str | Path) -> DatasetManifest:
    """Read and validate a dataset.json (a directory path is also accepted)."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise ManifestError(f"manifest file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"{path}: invalid JSON: {exc}") from exc
    for key in ("bands", "classes", "samples"):
        if key not in doc:
            raise ManifestError(f"{path}: missing top-level key {key!r}")
    try:
        bands = [BandId(b["name"], int(b["layer_index"])) for b in doc["bands"]]
    except (KeyError, TypeError) as exc:
        raise ManifestError(f"{path}: malformed band declaration: {exc}") from exc
    records = []
    for entry in doc["samples"]:
        try:
            band_map = {
                name: BandEntry(spec["image"], spec["boxes"], spec.get("mask"))
                for name, spec in entry["bands"].items()
            }
            records.append(SampleRecord(entry["id"], entry["timestamp"], band_map))
        except (KeyError, TypeError) as exc:
            raise ManifestError(
                f"{path}: malformed sample record {entry.get('id', '<no id>')!r}: {exc}"
            ) from exc
    manifest = DatasetManifest(path.parent, bands, tuple(doc["classes"]), records, doc.get("split"))
    manifest.validate()
    return manifest


def load_sample(manifest: DatasetManifest, record: SampleRecord) -> MultiLayerSample:
    """Materialize one sample: rasters, boxes, and masks where present."""
    images, detections, masks = {}, {}, {}
    for name in manifest.band_names:
        band = manifest.band_named(name)
        entry = record.bands[name]
        images[band] = io.read_raster(manifest.root / entry.image)
        detections[band] = io.read_boxes(manifest.root / entry.boxes)
        if entry.mask is not None:
            masks[band] = io.read_mask(manifest.root / entry.mask, manifest.classes)
    return MultiLayerSample(
        sample_id=record.sample_id,
        timestamp=record.timestamp,
        images=images,
        detections=detections,
        masks=masks or None,
    )


def iter_samples(manifest: DatasetManifest):
    for record in manifest.samples:
        yield load_sample(manifest, record)


def write_dataset(
    root: str | Path,
    samples: Iterable[MultiLayerSample],
    classes: Sequence[str],
    split: Optional[str] = None,
) -> DatasetManifest:
    """Write samples plus a manifest under `root` and return the manifest."""
    root = Path(root)
    for sub in ("images", "boxes", "masks"):
        (root / sub).mkdir(parents=True, exist_ok=True)
    bands: Optional[list[BandId]] = None
    records = []
    for sample in samples:
        if bands is None:
            bands = sample.bands
        elif sample.bands != bands:
            raise ManifestError(f"sample {sample.sample_id!r}: band set differs from first sample")
        band_map = {}
        for band in bands:
            stem = f"{sample.sample_id}_{band.name}"
            image_rel = f"images/{stem}.png"
            boxes_rel = f"boxes/{stem}.csv"
            io.write_raster(root / image_rel, sample.images[band])
            io.write_boxes(root / boxes_rel, sample.detections.get(band, []))
            mask_rel = None
            if sample.masks and band in sample.masks:
                mask_rel = f"masks/{stem}.png"
                io.write_mask(root / mask_rel, sample.masks[band])
            band_map[band.name] = BandEntry(image_rel, boxes_rel, mask_rel)
        records.append(SampleRecord(sample.sample_id, sample.timestamp, band_map))
    if bands is None:
        raise ManifestError("write_dataset needs at least one sample")
    manifest = DatasetManifest(root, bands, tuple(classes), records, split)
    save_manifest(manifest)
    return manifest


def split_dataset(
    manifest: DatasetManifest,
    fractions: Sequence[float],
    seed: int,
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Deterministic disjoint, exhaustive train/val/test partition.

    Sizes use floor allocation with the remainder going to the largest
    fractional parts (ties resolved in split order), so a fraction like
    213/266 yields exactly 213 samples.
    """
    if len(fractions) != 3:
        raise ValueError("fractions must be (train, val, test)")
    fractions = [float(f) for f in fractions]
    if any(f < 0 for f in fractions):
        raise ValueError("fractions must be non-negative")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {sum(fractions)}")
    n = len(manifest.samples)
    raw = [f * n for f in fractions]
    counts = [int(np.floor(r)) for r in raw]
    remainder = n - sum(counts)
    order = sorted(range(3), key=lambda i: (-(raw[i] - counts[i]), i))
    for i in range(remainder):
        counts[order[i % 3]] += 1
    for frac, count, name in zip(fractions, counts, ("train", "val", "test")):
        if frac > 0 and count == 0:
            raise ValueError(
                f"{name} fraction {frac} yields an empty split on {n} samples"
            )
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    cuts = np.cumsum(counts)[:-1]
    parts = np.split(perm, cuts)
    out = []
    for idx, name in zip(parts, ("train", "val", "test")):
        chosen = sorted(int(i) for i in idx)
        records = [manifest.samples[i] for i in chosen]
        out.append(
            DatasetManifest(manifest.root, list(manifest.bands), manifest.classes, records, name)
        )
    return tuple(out)  # type: ignore[return-value]
