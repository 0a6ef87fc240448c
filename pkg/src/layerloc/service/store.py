"""Versioned bounding-box annotation store.

One record per (sample, band): the current box list plus a version that
increases by exactly 1 per accepted write. Writes use optimistic
concurrency — they carry the version they were based on and are rejected
when it is stale — and are serialized per (sample, link group), so two
racing writers see exactly one winner.

Bands can be declared *linked*: an accepted write to one band copies the
same boxes to every band in its link group, bumping each linked record's
own version, so linked bands always answer with identical box lists.

Persistence is an append-only JSON-lines log per sample (one line per
affected band per write); the in-memory index is rebuilt by replaying the
logs at startup. Export snapshots the store into a dataset directory that
reads back with ``load_manifest``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from PIL import Image

from ..data.manifest import DatasetManifest, save_manifest, write_dataset
from ..data.types import BoundingBox, MultiLayerSample


class VersionConflict(Exception):
    """Write based on a stale version; carries the current one for retry."""

    def __init__(self, sample_id: str, band: str, expected: int, current: int):
        super().__init__(
            f"sample {sample_id!r} band {band!r}: expected version {expected}, "
            f"store has {current}"
        )
        self.sample_id = sample_id
        self.band = band
        self.expected = expected
        self.current = current


@dataclass(frozen=True)
class AnnotationRecord:
    """Current annotation state of one band of one sample."""

    sample_id: str
    band: str
    boxes: tuple[BoundingBox, ...]
    version: int
    author: str
    timestamp: str
    source_band: Optional[str] = None  # band the boxes were propagated from

    def to_document(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "band": self.band,
            "boxes": [box_to_document(b) for b in self.boxes],
            "version": self.version,
            "author": self.author,
            "timestamp": self.timestamp,
            "source_band": self.source_band,
        }

    @classmethod
    def from_document(cls, doc: Mapping) -> "AnnotationRecord":
        return cls(
            sample_id=doc["sample_id"],
            band=doc["band"],
            boxes=tuple(box_from_document(b) for b in doc["boxes"]),
            version=int(doc["version"]),
            author=doc.get("author", "anonymous"),
            timestamp=doc.get("timestamp", ""),
            source_band=doc.get("source_band"),
        )


def box_to_document(box: BoundingBox) -> dict:
    doc = {"x": box.x, "y": box.y, "w": box.w, "h": box.h, "class_id": box.class_id}
    if box.score is not None:
        doc["score"] = box.score
    return doc


def box_from_document(doc: Mapping) -> BoundingBox:
    return BoundingBox(
        x=float(doc["x"]),
        y=float(doc["y"]),
        w=float(doc["w"]),
        h=float(doc["h"]),
        class_id=int(doc.get("class_id", 0)),
        score=doc.get("score"),
    )


def _link_groups(
    band_names: Sequence[str], links: Iterable[tuple[str, str]]
) -> dict[str, tuple[str, ...]]:
    """Band -> sorted tuple of its link group (union over declared pairs)."""
    parent = {name: name for name in band_names}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in links:
        for name in (a, b):
            if name not in parent:
                raise ValueError(f"band link names unknown band {name!r}")
        parent[find(a)] = find(b)
    groups: dict[str, list[str]] = {}
    for name in band_names:
        groups.setdefault(find(name), []).append(name)
    return {name: tuple(sorted(members)) for members in groups.values() for name in members}


class AnnotationStore:
    def __init__(
        self,
        manifest: DatasetManifest,
        log_dir: str | Path | None = None,
        band_links: Iterable[tuple[str, str]] = (),
    ):
        self.manifest = manifest
        self.log_dir = Path(log_dir) if log_dir is not None else None
        self._groups = _link_groups(manifest.band_names, band_links)
        self._records: dict[tuple[str, str], AnnotationRecord] = {}
        self._accepted_writes = 0
        self._sample_ids = {r.sample_id for r in manifest.samples}
        self._frame_shapes: dict[str, tuple[int, int]] = {}
        self._locks: dict[tuple[str, tuple[str, ...]], threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._state_guard = threading.Lock()
        if self.log_dir is not None:
            self.log_dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    # ------------------------------------------------------------- queries

    @property
    def store_version(self) -> int:
        """Total accepted writes since the log began."""
        return self._accepted_writes

    def linked_to(self, band: str) -> tuple[str, ...]:
        """The other members of `band`'s link group."""
        self._check_band(band)
        return tuple(b for b in self._groups[band] if b != band)

    def record(self, sample_id: str, band: str) -> Optional[AnnotationRecord]:
        self._check_sample(sample_id)
        self._check_band(band)
        return self._records.get((sample_id, band))

    def version(self, sample_id: str, band: str) -> int:
        rec = self.record(sample_id, band)
        return rec.version if rec else 0

    def boxes(self, sample_id: str, band: str) -> tuple[BoundingBox, ...]:
        rec = self.record(sample_id, band)
        return rec.boxes if rec else ()

    def annotated_sample_ids(self) -> list[str]:
        """Samples with at least one write, in manifest order."""
        touched = {sid for (sid, _band) in self._records}
        return [r.sample_id for r in self.manifest.samples if r.sample_id in touched]

    def frame_shape(self, sample_id: str) -> tuple[int, int]:
        """(width, height) of the sample's rasters, read from PNG headers."""
        self._check_sample(sample_id)
        if sample_id not in self._frame_shapes:
            record = next(r for r in self.manifest.samples if r.sample_id == sample_id)
            first_band = self.manifest.band_names[0]
            path = self.manifest.root / record.bands[first_band].image
            with Image.open(path) as im:
                self._frame_shapes[sample_id] = im.size
        return self._frame_shapes[sample_id]

    # -------------------------------------------------------------- writes

    def put(
        self,
        sample_id: str,
        band: str,
        boxes: Sequence[BoundingBox],
        expected_version: int,
        author: str = "anonymous",
    ) -> dict[str, AnnotationRecord]:
        """Accept a write and propagate it across the band's link group.

        Returns the new record per affected band (the written band plus its
        linked bands). Raises VersionConflict when expected_version is stale
        and ValueError when a box falls outside the image.
        """
        self._check_sample(sample_id)
        self._check_band(band)
        width, height = self.frame_shape(sample_id)
        for box in boxes:
            if not box.within(width, height):
                raise ValueError(
                    f"box ({box.x},{box.y},{box.w},{box.h}) outside {width}x{height} image"
                )
        with self._group_lock(sample_id, band):
            current = self.version(sample_id, band)
            if expected_version != current:
                raise VersionConflict(sample_id, band, expected_version, current)
            now = datetime.now(timezone.utc).isoformat()
            records = {
                band: AnnotationRecord(
                    sample_id, band, tuple(boxes), current + 1, author, now
                )
            }
            for other in self.linked_to(band):
                records[other] = AnnotationRecord(
                    sample_id,
                    other,
                    tuple(boxes),
                    self.version(sample_id, other) + 1,
                    author,
                    now,
                    source_band=band,
                )
            self._append_log(sample_id, records.values())
            with self._state_guard:
                for rec in records.values():
                    self._records[(sample_id, rec.band)] = rec
                self._accepted_writes += 1
        return records

    # -------------------------------------------------------------- export

    def export(self, out_dir: str | Path) -> DatasetManifest:
        """Snapshot annotated samples as a dataset directory.

        Box lists come from the store (bands never written export empty
        lists); images are copied from the source dataset so the result is
        self-contained. An empty store exports a manifest with no samples.
        """
        from ..data.manifest import load_sample

        out_dir = Path(out_dir)
        annotated = self.annotated_sample_ids()
        if not annotated:
            manifest = DatasetManifest(
                out_dir, list(self.manifest.bands), self.manifest.classes, [], None
            )
            out_dir.mkdir(parents=True, exist_ok=True)
            save_manifest(manifest)
            return manifest

        def snapshots():
            by_id = {r.sample_id: r for r in self.manifest.samples}
            for sample_id in annotated:
                sample = load_sample(self.manifest, by_id[sample_id])
                detections = {
                    band: list(self.boxes(sample_id, band.name)) for band in sample.bands
                }
                yield MultiLayerSample(
                    sample_id=sample.sample_id,
                    timestamp=sample.timestamp,
                    images=sample.images,
                    detections=detections,
                    masks=None,
                )

        return write_dataset(out_dir, snapshots(), self.manifest.classes)

    # ------------------------------------------------------------ plumbing

    def _check_sample(self, sample_id: str) -> None:
        if sample_id not in self._sample_ids:
            raise KeyError(f"unknown sample {sample_id!r}")

    def _check_band(self, band: str) -> None:
        if band not in self._groups:
            raise KeyError(f"unknown band {band!r}")

    def _group_lock(self, sample_id: str, band: str) -> threading.Lock:
        key = (sample_id, self._groups[band])
        with self._locks_guard:
            if key not in self._locks:
                self._locks[key] = threading.Lock()
            return self._locks[key]

    def _log_path(self, sample_id: str) -> Path:
        assert self.log_dir is not None
        return self.log_dir / f"{sample_id}.jsonl"

    def _append_log(self, sample_id: str, records: Iterable[AnnotationRecord]) -> None:
        if self.log_dir is None:
            return
        lines = "".join(
            json.dumps(rec.to_document(), sort_keys=True) + "\n" for rec in records
        )
        with open(self._log_path(sample_id), "a") as fh:
            fh.write(lines)
            fh.flush()

    def _replay(self) -> None:
        assert self.log_dir is not None
        for path in sorted(self.log_dir.glob("*.jsonl")):
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = AnnotationRecord.from_document(json.loads(line))
                self._records[(rec.sample_id, rec.band)] = rec
                if rec.source_band is None:
                    self._accepted_writes += 1
