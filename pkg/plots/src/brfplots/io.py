"""Artifact parsing: CSV columns plus JSON metadata sidecars, with schema
version and column checks that fail loudly and name what is missing."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from . import SUPPORTED_SCHEMA_VERSION


class SchemaError(ValueError):
    """Input artifact does not match the documented schema."""


def read_columns(path) -> dict:
    """Parse a CSV into {column: float array}; 'inf'/'nan' parse as floats."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise SchemaError(f"{path}: empty file, no CSV header")
        rows = list(reader)
    columns = {name: np.array([float(row[name]) for row in rows])
               for name in reader.fieldnames}
    return columns


def require_columns(columns: dict, required, path) -> None:
    missing = [c for c in required if c not in columns]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing} "
                          f"(found {sorted(columns)})")


def load_sidecar(path, expected_artifact: str | None = None) -> dict:
    """Load <path>.meta.json and enforce the schema version contract."""
    sidecar = Path(str(path) + ".meta.json")
    if not sidecar.exists():
        raise SchemaError(f"{sidecar}: metadata sidecar not found")
    meta = json.loads(sidecar.read_text())
    version = meta.get("schema_version")
    if version != SUPPORTED_SCHEMA_VERSION:
        raise SchemaError(
            f"{sidecar}: schema version {version} not supported "
            f"(this renderer understands {SUPPORTED_SCHEMA_VERSION})")
    if expected_artifact and meta.get("artifact") != expected_artifact:
        raise SchemaError(f"{sidecar}: artifact kind {meta.get('artifact')!r}, "
                          f"expected {expected_artifact!r}")
    return meta


def check_metrics_schema(path, columns: dict, metric: str) -> bool:
    """Validate a training metrics CSV (plain or aggregate).

    Returns True when the file is an aggregate (has <metric>_mean/_std).
    Checks the neighbouring summary.json's schema version when present.
    """
    path = Path(path)
    summary = path.parent / "summary.json"
    if summary.exists():
        version = json.loads(summary.read_text()).get("schema_version")
        if version != SUPPORTED_SCHEMA_VERSION:
            raise SchemaError(f"{summary}: schema version {version} not "
                              f"supported ({SUPPORTED_SCHEMA_VERSION} expected)")
    require_columns(columns, ["epoch"], path)
    if f"{metric}_mean" in columns:
        require_columns(columns, [f"{metric}_mean", f"{metric}_std"], path)
        return True
    require_columns(columns, [metric], path)
    return False
