"""Transformer embedding export for the normalization toolkit."""

from .formats import ExportError
from .inference import DEFAULT_MAX_LENGTH, Encoder, ExportJob, ExportReport, run_export

__all__ = [
    "DEFAULT_MAX_LENGTH",
    "Encoder",
    "ExportError",
    "ExportJob",
    "ExportReport",
    "run_export",
]
