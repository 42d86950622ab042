"""Byte-stable output helpers.

Floats in CSV files are written with 17 significant digits, which
round-trips every double exactly.  JSON records use Python's shortest
round-trip float representation, which is equally lossless and
deterministic.  Files are written to a temporary name and moved into place.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

__all__ = ["fmt", "write_csv", "write_rows", "write_jsonl", "write_json_atomic", "read_csv", "sha256_file", "jsonable"]


def fmt(v) -> str:
    """17-significant-digit text for a float; integers and strings pass through."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return format(float(v), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, columns: dict) -> Path:
    """Write equal-length columns with a header row."""
    names = list(columns)
    cols = [np.asarray(columns[k]) for k in names]
    lengths = {len(c) for c in cols}
    if len(lengths) > 1:
        raise ValueError(f"columns have different lengths: {sorted(lengths)}")
    rows = zip(*cols) if cols else []
    return write_rows(path, names, rows)


def write_rows(path, header, rows) -> Path:
    lines = [",".join(header)]
    lines += [",".join(fmt(v) for v in row) for row in rows]
    _atomic_write(Path(path), "\n".join(lines) + "\n")
    return Path(path)


def read_csv(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    header = lines[0].split(",")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]]) if len(lines) > 1 else np.zeros((0, len(header)))
    return {h: data[:, i] for i, h in enumerate(header)}


def jsonable(obj):
    """Convert numpy scalars/arrays, enums and non-finite floats into JSON-safe values."""
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    if isinstance(obj, complex):
        return [jsonable(obj.real), jsonable(obj.imag)]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _dump(record) -> str:
    return json.dumps(jsonable(record), sort_keys=True, allow_nan=False)


def write_jsonl(path, records) -> Path:
    _atomic_write(Path(path), "".join(_dump(r) + "\n" for r in records))
    return Path(path)


def write_json_atomic(path, record) -> Path:
    _atomic_write(Path(path), json.dumps(jsonable(record), sort_keys=True, indent=2, allow_nan=False) + "\n")
    return Path(path)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()
