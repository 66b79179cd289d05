"""Deterministic serialization: JSON and CSV with 17-significant-digit floats,
binary field dumps with a JSON sidecar."""
from __future__ import annotations

import json
import math

import numpy as np

__all__ = [
    "format_float",
    "dumps",
    "write_json",
    "write_csv",
    "write_field",
    "read_field",
    "read_expansion",
]


def format_float(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _encode(obj, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        return "null"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return format_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k))}: {_encode(obj[k], indent, level + 1)}"
            for k in sorted(obj, key=str)
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float, np.number, bool)) or v is None for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        items = [f"{pad}{_encode(v, indent, level + 1)}" for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if hasattr(obj, "to_dict"):
        return _encode(obj.to_dict(), indent, level)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with sorted keys and floats printed with 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


def write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(obj))


def write_csv(path, header, rows, config_hash=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if config_hash is not None:
            fh.write(f"# config_hash={config_hash}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_float(v) if not isinstance(v, str) else v for v in row) + "\n")


def write_field(stem, field, config_hash=None):
    """Write ``stem.bin`` (little-endian f64, row-major ``(N, 3)``), ``stem.json`` and ``stem.csv``."""
    grid = field.grid
    values = np.ascontiguousarray(field.values, dtype="<f8")
    with open(f"{stem}.bin", "wb") as fh:
        fh.write(values.tobytes(order="C"))
    meta = {
        "grid": grid.metadata(),
        "n0": field.far_value,
        "shape": list(values.shape),
        "dtype": "float64",
        "byte_order": "little",
        "config_hash": config_hash,
    }
    write_json(f"{stem}.json", meta)
    rows = np.hstack([grid.points, field.values])
    write_csv(f"{stem}.csv", ["x", "y", "z", "nx", "ny", "nz"], rows, config_hash)


def read_field(stem):
    """Values and sidecar metadata of a dump written by :func:`write_field`."""
    with open(f"{stem}.json", encoding="utf-8") as fh:
        meta = json.load(fh)
    values = np.fromfile(f"{stem}.bin", dtype="<f8").reshape(meta["shape"])
    return values, meta


def read_expansion(path):
    from .expansion import FarFieldExpansion

    with open(path, encoding="utf-8") as fh:
        return FarFieldExpansion.from_dict(json.load(fh))
