"""Snapshot exporter: radare2 -> disassembly snapshot JSON (schema v1)."""

from .export import ExportError, WARNING_MARKER, build_snapshot, export_snapshot
from .r2 import R2_ENV_VAR, R2Error

__version__ = "0.1.0"
