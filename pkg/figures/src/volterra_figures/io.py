"""CSV loading with per-figure schema validation."""

from __future__ import annotations

import csv
from pathlib import Path


class SchemaError(ValueError):
    """Input rows do not match the figure kind's expected columns."""


SCHEMAS = {
    "rate": ("eps", "p", "lp_error", "lp_error_pth_root", "std_error",
             "paths", "steps", "exact", "slope", "intercept", "r_squared"),
    "moments": ("t", "p", "estimate", "std_error", "label", "eps"),
    "covariance": ("s", "t", "reconstructed", "target", "ratio"),
}


def load_rows(path: str | Path, kind: str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if kind in SCHEMAS:
            missing = [c for c in SCHEMAS[kind] if c not in header]
            if missing:
                raise SchemaError(
                    f"{path.name}: missing column(s) {', '.join(missing)}")
        rows = list(reader)
    if not rows:
        raise SchemaError(f"{path.name}: no rows")
    return rows


def load_trajectory(path: str | Path) -> tuple[list[float], list[list[float]]]:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if "t" not in header or not any(c.startswith("v_") for c in header):
            raise SchemaError(f"{path.name}: missing column(s) t, v_1")
        comps = sorted((c for c in header if c.startswith("v_")),
                       key=lambda c: int(c.split("_")[1]))
        times, values = [], []
        for row in reader:
            times.append(float(row["t"]))
            values.append([float(row[c]) for c in comps])
    if not times:
        raise SchemaError(f"{path.name}: no rows")
    return times, values
