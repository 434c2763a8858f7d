"""CSV and JSON writers for run outputs.

Tables are comma-separated with a header row; floats are written with 17
significant digits so files round-trip and compare byte-for-byte.
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


class OutputError(OSError):
    def __init__(self, path, cause):
        self.path = Path(path)
        self.code = "io-failure"
        super().__init__(f"io-failure: cannot write {path}: {cause}")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_table(path, columns, rows):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OutputError(path, exc) from exc
    return path


def read_table(path):
    """Column name -> float array for a table written by ``write_table`` (numeric columns only)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    out = {}
    for k, name in enumerate(header):
        try:
            out[name] = np.array([float(r[k]) for r in body], dtype=float)
        except ValueError:
            out[name] = [r[k] for r in body]
    return out


def write_timeseries(ledger, path):
    return write_table(path, ledger.columns, ledger.rows)


def write_tracers(tracers, path):
    rows = tracers.rows if tracers is not None else []
    return write_table(path, ["t", "species", "index", "X", "V1", "V2", "I"], rows)


def write_snapshot(particles, path):
    """One row per macro-particle: species label, x, v1, v2, w."""
    def rows():
        for p in particles:
            for i in range(len(p)):
                yield (p.species.label, float(p.x[i]), float(p.v1[i]), float(p.v2[i]), float(p.w[i]))
    return write_table(path, ["species", "x", "v1", "v2", "w"], rows())


def write_field_snapshot(fields, path):
    g = fields.grid
    cols = (g.nodes, fields.E1, fields.E2, fields.B, fields.A)
    return write_table(path, ["x", "E1", "E2", "B", "A"], zip(*cols))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(obj, path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OutputError(path, exc) from exc
    return path


def emit_report(summary: dict, path):
    return write_json(summary, path)
