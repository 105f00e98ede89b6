"""Deterministic CSV/JSON emission with atomic writes."""

from __future__ import annotations

import json

import numpy as np
import os
import tempfile


def _fmt(x) -> str:
    # repr round-trips floats and is byte-stable for the determinism contract;
    # numpy scalars are unwrapped so their reprs never leak into the file
    if isinstance(x, np.floating):
        x = float(x)
    elif isinstance(x, np.integer):
        x = int(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the same directory, then rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp_", suffix="~")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def format_csv(columns: dict) -> str:
    """Render named columns ('.' decimal, '\\n' newlines, header row)."""
    names = list(columns)
    arrays = [columns[k] for k in names]
    n = len(arrays[0]) if arrays else 0
    for k, arr in zip(names, arrays):
        if len(arr) != n:
            raise ValueError(f"column {k!r} has length {len(arr)}, expected {n}")
    lines = [",".join(names)]
    for i in range(n):
        lines.append(",".join(_fmt(col[i]) for col in arrays))
    return "\n".join(lines) + "\n"


def write_csv(path, columns: dict) -> None:
    atomic_write_text(path, format_csv(columns))


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")
