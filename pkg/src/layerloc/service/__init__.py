"""Annotation backend: versioned box store plus the HTTP API over it."""

from .store import AnnotationRecord, AnnotationStore, VersionConflict

__all__ = ["AnnotationRecord", "AnnotationStore", "VersionConflict"]
