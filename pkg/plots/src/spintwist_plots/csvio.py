"""Schema-checked CSV loading for the engine's delimited outputs."""

import csv
import sys

import numpy as np


class SchemaError(ValueError):
    pass


def load_columns(path, required, optional=()):
    """Read named columns; report exactly which required ones are missing."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = list(reader)
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(
            f"{path}: missing columns {missing}; found {header}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    cols = {}
    for name in list(required) + [c for c in optional if c in header]:
        idx = header.index(name)
        vals = []
        for row in rows:
            cell = row[idx]
            try:
                vals.append(float(cell))
            except ValueError:
                vals.append(np.nan)
        cols[name] = np.array(vals)
    return cols


def fail(err):
    print(f"error: {err}", file=sys.stderr)
    return 2
