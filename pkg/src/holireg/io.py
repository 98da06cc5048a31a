"""Strict CSV ingestion and versioned JSON reports."""

from __future__ import annotations

import csv
import json
import math
import sys

import numpy as np

from .exceptions import ParseError

SCHEMA_VERSION = 1


def read_csv(path):
    """Read a comma-separated numeric table with a header row.

    Every cell must parse as a finite float; empty cells, text, ``nan`` and
    ``inf`` are rejected with the offending line and column named.

    Returns
    -------
    names : list of str
    data : ndarray of shape (rows, columns)
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh, delimiter=",", strict=True))
    except (OSError, UnicodeDecodeError, csv.Error) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: file is empty")
    names = [h.strip() for h in rows[0]]
    if not names or any(not h for h in names):
        raise ParseError(f"{path}: header has an empty column name")
    if len(set(names)) != len(names):
        raise ParseError(f"{path}: duplicated column names in header")
    data = []
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names):
            raise ParseError(f"{path}: line {line} has {len(row)} fields, expected {len(names)}")
        values = []
        for name, cell in zip(names, row):
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: line {line}, column '{name}': not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise ParseError(f"{path}: line {line}, column '{name}': non-finite value")
            values.append(v)
        data.append(values)
    if not data:
        raise ParseError(f"{path}: no data rows")
    return names, np.asarray(data, dtype=float)


def split_target(names, data, target):
    """Separate the ``target`` column from the features."""
    if target not in names:
        raise ParseError(f"target column '{target}' not found")
    j = names.index(target)
    keep = [i for i in range(len(names)) if i != j]
    return [names[i] for i in keep], data[:, keep], data[:, j]


def write_csv(path, names, data):
    """Write a numeric table with ``repr`` precision so values round-trip exactly."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in np.asarray(data, dtype=float):
            writer.writerow([repr(float(v)) for v in row])


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def dump_report(report, path=None):
    """Serialise ``report`` as JSON; non-finite numbers become ``null``."""
    body = dict(schema_version=SCHEMA_VERSION)
    body.update(report)
    text = json.dumps(_plain(body), indent=2, allow_nan=False) + "\n"
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
