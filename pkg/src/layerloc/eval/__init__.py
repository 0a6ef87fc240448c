"""Evaluation: box matching, precision/recall/F1, IoU, agreement, reports."""

from .metrics import (
    IoUScores,
    MatchResult,
    PRF1,
    agreement,
    intersection_area,
    iou_scores,
    is_eligible_match,
    match_detections,
    prf1,
    prf1_from_counts,
)
from .report import BandDetectionScore, EvalReport, load_report

__all__ = [
    "BandDetectionScore",
    "EvalReport",
    "IoUScores",
    "MatchResult",
    "PRF1",
    "agreement",
    "intersection_area",
    "iou_scores",
    "is_eligible_match",
    "load_report",
    "match_detections",
    "prf1",
    "prf1_from_counts",
]
