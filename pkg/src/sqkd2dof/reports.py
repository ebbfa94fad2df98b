"""Deterministic report rendering: canonical JSON, aligned tables, CSV.

Identical inputs must produce byte-identical output, so everything is sorted,
floats go through ``repr``, and no timestamps or environment details appear.
"""

from __future__ import annotations

import csv
import io
import json
from enum import Enum
from fractions import Fraction

import numpy as np


def jsonable(obj):
    """Recursively convert report values to plain JSON-serializable types.

    Complex numbers become [re, im] pairs; numpy arrays become nested lists;
    fractions become floats.
    """
    if obj is None or isinstance(obj, (bool, int, str)):
        return obj
    if isinstance(obj, float):
        return obj
    if isinstance(obj, Fraction):
        return float(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.complexfloating):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return [jsonable(v) for v in obj.tolist()]
    if isinstance(obj, dict):
        return {str(k): jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    raise TypeError(f"cannot serialize {type(obj).__name__} into a report")


def canonical_json(obj) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n"


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_cell(v) for v in value) + "]"
    return str(value)


def render_table(rows: list[tuple[str, object]], title: str | None = None) -> str:
    """Two-column aligned table of (name, value) pairs."""
    lines = []
    if title:
        lines.append(title)
    width = max((len(name) for name, _ in rows), default=0)
    for name, value in rows:
        lines.append(f"{name:<{width}}  {_cell(value)}")
    return "\n".join(lines) + "\n"


def render_csv(fieldnames: list[str], rows: list[dict]) -> str:
    """CSV text with a fixed column order and LF line endings."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=fieldnames, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if row.get(k) is None else _cell(row[k]) for k in fieldnames})
    return buf.getvalue()


def flatten(prefix: str, obj, out: dict | None = None) -> dict:
    """Flatten nested dicts/lists into dotted keys for CSV rows."""
    if out is None:
        out = {}
    if isinstance(obj, dict):
        for k in sorted(obj):
            flatten(f"{prefix}.{k}" if prefix else str(k), obj[k], out)
    elif isinstance(obj, (list, tuple)):
        out[prefix] = _cell(list(obj))
    else:
        out[prefix] = obj
    return out
