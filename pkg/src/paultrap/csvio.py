"""CSV interchange: one header line, ``#``-prefixed ``key: value`` metadata."""

import csv
import io
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    """CSV content does not match the expected columns."""


def fmt(value):
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".12g")
    return str(value)


def write_csv(path, header, rows, meta=None):
    """Write ``rows`` under ``header``; ``meta`` items become comment lines.

    Output depends only on the arguments, so equal inputs give equal bytes.
    """
    buf = io.StringIO()
    for key, value in (meta or {}).items():
        buf.write(f"# {key}: {fmt(value)}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())
    return Path(path)


def read_csv(path):
    """Return ``(header, rows, meta)`` with rows as lists of strings."""
    meta = {}
    lines = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].partition(":")
            meta[key.strip()] = value.strip()
        elif line.strip():
            lines.append(line)
    if not lines:
        raise SchemaError(f"{path}: no header line")
    reader = csv.reader(lines)
    header = [h.strip() for h in next(reader)]
    rows = [r for r in reader]
    for i, r in enumerate(rows):
        if len(r) != len(header):
            raise SchemaError(f"{path}: row {i + 1} has {len(r)} fields, header has {len(header)}")
    return header, rows, meta


def read_columns(path, required, optional=()):
    """Numeric columns ``required`` (+ any present ``optional``) as a dict of arrays."""
    header, rows, meta = read_csv(path)
    missing = [c for c in required if c not in header]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}; found {header}")
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    out = {}
    for name in list(required) + [c for c in optional if c in header]:
        j = header.index(name)
        try:
            out[name] = np.array([float(r[j]) for r in rows])
        except ValueError as exc:
            raise SchemaError(f"{path}: column {name!r} is not numeric") from exc
    return out, meta
