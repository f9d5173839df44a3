"""Exporters that write detector outputs in the engine's file formats."""

from .export import (
    AdapterSession,
    CaptureSettings,
    ExportError,
    export_detections,
    export_embeddings,
)

__all__ = [
    "AdapterSession",
    "CaptureSettings",
    "ExportError",
    "export_detections",
    "export_embeddings",
]
