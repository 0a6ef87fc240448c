"""Evaluation report assembly and emission.

One report gathers per-band detection scores (precision / recall / F1 with
their TP/FP/FN counts), per-band segmentation scores (per-class IoU and
the mean over present classes), optional per-band cross-method agreement,
and an echo of the configuration that produced them. It serializes to
``report.json`` plus CSV tables with one band per row — detection columns
band, precision, recall, f1; segmentation columns band, one IoU column per
class, mean.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .metrics import IoUScores, MatchResult, prf1_from_counts


@dataclass(frozen=True)
class BandDetectionScore:
    tp: int
    fp: int
    fn: int
    precision: float
    recall: float
    f1: float
    degenerate: bool = False

    @classmethod
    def from_counts(cls, tp: int, fp: int, fn: int) -> "BandDetectionScore":
        p = prf1_from_counts(tp, fp, fn)
        return cls(tp, fp, fn, p.precision, p.recall, p.f1, p.degenerate)


@dataclass
class EvalReport:
    """Per-band metric tables plus the configuration echo."""

    bands: tuple[str, ...]
    class_names: tuple[str, ...] = ()
    detection: dict[str, BandDetectionScore] = field(default_factory=dict)
    segmentation: dict[str, IoUScores] = field(default_factory=dict)
    agreement: dict[str, float] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    # ------------------------------------------------------------- building

    def add_detection_counts(self, band: str, tp: int, fp: int, fn: int) -> None:
        self.detection[band] = BandDetectionScore.from_counts(tp, fp, fn)

    def add_matches(self, band: str, matches: list[MatchResult]) -> None:
        tp = sum(m.tp for m in matches)
        fp = sum(m.fp for m in matches)
        fn = sum(m.fn for m in matches)
        self.add_detection_counts(band, tp, fp, fn)

    # ------------------------------------------------------------ emission

    def to_document(self) -> dict:
        doc: dict = {"bands": list(self.bands), "config": dict(self.config)}
        if self.class_names:
            doc["classes"] = list(self.class_names)
        if self.detection:
            doc["detection"] = {
                band: {
                    "tp": s.tp,
                    "fp": s.fp,
                    "fn": s.fn,
                    "precision": s.precision,
                    "recall": s.recall,
                    "f1": s.f1,
                    "degenerate": s.degenerate,
                }
                for band, s in self.detection.items()
            }
        if self.segmentation:
            doc["segmentation"] = {
                band: {
                    "per_class_iou": {str(c): v for c, v in s.per_class.items()},
                    "mean_iou": s.mean,
                    "skipped_classes": list(s.skipped_classes),
                }
                for band, s in self.segmentation.items()
            }
        if self.agreement:
            doc["agreement"] = dict(self.agreement)
        return doc

    def detection_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["band", "precision", "recall", "f1"])
        for band in self.bands:
            if band not in self.detection:
                continue
            s = self.detection[band]
            writer.writerow([band, f"{s.precision:.2f}", f"{s.recall:.2f}", f"{s.f1:.2f}"])
        return buf.getvalue()

    def segmentation_csv(self) -> str:
        names = self.class_names or tuple(
            str(c)
            for s in self.segmentation.values()
            for c in sorted(set(s.per_class) | set(s.skipped_classes))
        )
        n_classes = len(names)
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["band", *names, "mean_iou"])
        for band in self.bands:
            if band not in self.segmentation:
                continue
            s = self.segmentation[band]
            cells = [
                f"{s.per_class[c]:.2f}" if c in s.per_class else "-"
                for c in range(n_classes)
            ]
            writer.writerow([band, *cells, f"{s.mean:.2f}"])
        return buf.getvalue()

    def agreement_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["band", "agreement_iou"])
        for band in self.bands:
            if band in self.agreement:
                writer.writerow([band, f"{self.agreement[band]:.2f}"])
        return buf.getvalue()

    def save(self, out_dir: Path) -> list[Path]:
        """Write report.json and whichever CSV tables have content."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        written = []
        report_path = out_dir / "report.json"
        report_path.write_text(
            json.dumps(self.to_document(), indent=2, sort_keys=True) + "\n"
        )
        written.append(report_path)
        if self.detection:
            p = out_dir / "detection_table.csv"
            p.write_text(self.detection_csv())
            written.append(p)
        if self.segmentation:
            p = out_dir / "segmentation_table.csv"
            p.write_text(self.segmentation_csv())
            written.append(p)
        if self.agreement:
            p = out_dir / "agreement_table.csv"
            p.write_text(self.agreement_csv())
            written.append(p)
        return written


def load_report(path: Path) -> dict:
    """Read back a saved report.json document."""
    return json.loads(Path(path).read_text())
