"""HTTP API over the annotation store.

Endpoints (all JSON unless noted):

- ``GET  /api/samples`` — sample listing in timestamp order with per-band
  versions.
- ``GET  /api/samples/{id}/context?before&after`` — the target sample plus
  up to 3 earlier and 3 later samples (timestamp order); sequence edges
  truncate the strip rather than padding it.
- ``GET  /api/images/{id}/{band}.png?stretch=lo,hi`` — 8-bit display PNG,
  optionally percentile-stretched; annotation geometry is unaffected. The
  band's record version rides in the ``X-Annotation-Version`` header.
- ``PUT  /api/annotations/{id}/{band}`` — body ``{boxes, expected_version,
  author}``; optimistic concurrency (409 on stale version, store
  unchanged), out-of-bounds boxes rejected (422), empty list clears the
  band (version still bumps). Accepted writes propagate to linked bands.
- ``POST /api/export`` — snapshot annotations as a loadable dataset.

Every JSON response carries record versions; the listing/context/export
responses also carry ``store_version`` (total accepted writes).
"""

from __future__ import annotations

import io
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from fastapi import FastAPI, HTTPException, Response
from PIL import Image
from pydantic import BaseModel, Field

from ..data import io as data_io
from ..data.manifest import DatasetManifest, load_manifest
from ..data.types import BoundingBox
from .store import AnnotationStore, VersionConflict, box_to_document


class BoxBody(BaseModel):
    x: float
    y: float
    w: float = Field(gt=0)
    h: float = Field(gt=0)
    class_id: int = 0
    score: Optional[float] = Field(default=None, ge=0.0, le=1.0)

    def to_box(self) -> BoundingBox:
        return BoundingBox(self.x, self.y, self.w, self.h, self.class_id, self.score)


class AnnotationBody(BaseModel):
    boxes: list[BoxBody]
    expected_version: int = Field(ge=0)
    author: str = "anonymous"


class ExportBody(BaseModel):
    out_dir: str
    format: str = "manifest"


def _record_payload(store: AnnotationStore, sample_id: str, band: str) -> dict:
    rec = store.record(sample_id, band)
    return {
        "band": band,
        "version": store.version(sample_id, band),
        "boxes": [box_to_document(b) for b in (rec.boxes if rec else ())],
        "author": rec.author if rec else None,
        "updated": rec.timestamp if rec else None,
    }


def create_app(
    manifest_path: str | Path | DatasetManifest,
    store_path: str | Path | None = None,
    band_links: Iterable[tuple[str, str]] = (),
    frontend_dir: str | Path | None = None,
) -> FastAPI:
    manifest = (
        manifest_path
        if isinstance(manifest_path, DatasetManifest)
        else load_manifest(manifest_path)
    )
    store = AnnotationStore(manifest, log_dir=store_path, band_links=band_links)
    ordered = sorted(manifest.samples, key=lambda r: (r.timestamp, r.sample_id))
    position = {r.sample_id: i for i, r in enumerate(ordered)}

    app = FastAPI(title="layerloc annotation service")
    app.state.store = store

    def _require_sample(sample_id: str):
        if sample_id not in position:
            raise HTTPException(status_code=404, detail=f"unknown sample {sample_id!r}")

    def _require_band(band: str):
        if band not in manifest.band_names:
            raise HTTPException(status_code=404, detail=f"unknown band {band!r}")

    def _sample_payload(record) -> dict:
        return {
            "id": record.sample_id,
            "timestamp": record.timestamp,
            "bands": {
                band: {
                    **_record_payload(store, record.sample_id, band),
                    "image_url": f"/api/images/{record.sample_id}/{band}.png",
                    "linked_bands": list(store.linked_to(band)),
                }
                for band in manifest.band_names
            },
        }

    @app.get("/api/samples")
    def list_samples() -> dict:
        return {
            "samples": [
                {
                    "id": r.sample_id,
                    "timestamp": r.timestamp,
                    "bands": {
                        band: {"version": store.version(r.sample_id, band)}
                        for band in manifest.band_names
                    },
                }
                for r in ordered
            ],
            "bands": manifest.band_names,
            "classes": list(manifest.classes),
            "store_version": store.store_version,
        }

    @app.get("/api/samples/{sample_id}/context")
    def get_context(sample_id: str, before: int = 3, after: int = 3) -> dict:
        _require_sample(sample_id)
        if before < 0 or after < 0:
            raise HTTPException(status_code=422, detail="before/after must be >= 0")
        idx = position[sample_id]
        window = ordered[max(0, idx - before) : idx + after + 1]
        return {
            "target": sample_id,
            "samples": [_sample_payload(r) for r in window],
            "store_version": store.store_version,
        }

    @app.get("/api/images/{sample_id}/{band}.png")
    def get_image(sample_id: str, band: str, stretch: str | None = None) -> Response:
        _require_sample(sample_id)
        _require_band(band)
        record = next(r for r in manifest.samples if r.sample_id == sample_id)
        image = data_io.read_raster(manifest.root / record.bands[band].image)
        if stretch is not None:
            try:
                lo_pct, hi_pct = (float(v) for v in stretch.split(","))
            except ValueError:
                raise HTTPException(
                    status_code=422, detail="stretch must be 'lo,hi' percentiles"
                )
            if not 0 <= lo_pct < hi_pct <= 100:
                raise HTTPException(
                    status_code=422, detail="stretch percentiles must satisfy 0 <= lo < hi <= 100"
                )
            lo, hi = np.percentile(image, [lo_pct, hi_pct])
            if hi > lo:
                image = (image - lo) / (hi - lo)
        quantized = np.round(np.clip(image, 0.0, 1.0) * 255).astype(np.uint8)
        buf = io.BytesIO()
        Image.fromarray(quantized, mode="L").save(buf, format="PNG")
        return Response(
            content=buf.getvalue(),
            media_type="image/png",
            headers={"X-Annotation-Version": str(store.version(sample_id, band))},
        )

    @app.put("/api/annotations/{sample_id}/{band}")
    def put_annotation(sample_id: str, band: str, body: AnnotationBody) -> dict:
        _require_sample(sample_id)
        _require_band(band)
        try:
            boxes = [b.to_box() for b in body.boxes]
            records = store.put(
                sample_id, band, boxes, body.expected_version, author=body.author
            )
        except VersionConflict as exc:
            raise HTTPException(
                status_code=409,
                detail={
                    "error": "version_conflict",
                    "expected_version": exc.expected,
                    "current_version": exc.current,
                    "band": band,
                },
            )
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        primary = records[band]
        return {
            "record": primary.to_document(),
            "version": primary.version,
            "propagated": {
                name: rec.version for name, rec in records.items() if name != band
            },
            "store_version": store.store_version,
        }

    @app.post("/api/export")
    def export(body: ExportBody) -> dict:
        if body.format != "manifest":
            raise HTTPException(status_code=422, detail="only format='manifest' is supported")
        exported = store.export(Path(body.out_dir))
        return {
            "manifest": str(Path(body.out_dir) / "dataset.json"),
            "samples": len(exported.samples),
            "store_version": store.store_version,
        }

    if frontend_dir is not None and Path(frontend_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
