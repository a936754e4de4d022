"""Canonical CSV output: fixed column order, numbers to 12 significant digits."""

from __future__ import annotations

import csv
import io
import math

SWEEP_HEADER = ("x", "policy", "value", "stderr")
DIST_HEADER = ("terminal", "j", "mu")


def fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return "%.12g" % value
    if hasattr(value, "item"):  # numpy scalar
        return fmt(value.item())
    return str(value)


def render(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def write(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(render(header, rows))


def _value(cell: str):
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return {"true": True, "false": False}.get(cell, cell)


def read(path):
    """Header and rows with numbers converted back to int/float."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = [[_value(c) for c in row] for row in reader]
    return header, rows
