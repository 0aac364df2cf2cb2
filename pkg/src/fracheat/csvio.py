"""CSV writing with a one-line ``#`` manifest header."""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import FracHeatError


class IOFailure(FracHeatError, OSError):
    pass


def format_number(v) -> str:
    return f"{float(v):.17e}"


def manifest_line(manifest) -> str:
    return "# manifest: " + json.dumps(manifest, sort_keys=True, separators=(",", ":"))


def write_csv(path, header, columns, manifest=None):
    """Write equally long columns (or a 2-D array) as CSV.

    Numbers are written in full-precision scientific notation so repeated runs
    are byte-identical.
    """
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if isinstance(
        columns, (list, tuple)) else np.asarray(columns, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.shape[1] != len(header):
        raise ValueError(f"{len(header)} header names for {data.shape[1]} columns")
    lines = []
    if manifest is not None:
        lines.append(manifest_line(manifest))
    lines.append(",".join(header))
    lines.extend(",".join(format_number(v) for v in row) for row in data)
    return _dump(path, lines)


def write_rows(path, header, rows, manifest=None):
    """Like :func:`write_csv` for rows mixing text and numbers."""
    def cell(v):
        return v if isinstance(v, str) else format_number(v)
    lines = [] if manifest is None else [manifest_line(manifest)]
    lines.append(",".join(header))
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row of {len(row)} cells for {len(header)} columns")
        lines.append(",".join(cell(v) for v in row))
    return _dump(path, lines)


def _dump(path, lines):
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IOFailure(f"cannot write {path}: {exc}") from exc
    return path


def read_csv(path, numeric: bool = True):
    """Return ``(manifest_dict_or_None, header, rows)``.

    ``rows`` is a float array, or a list of string lists with ``numeric=False``.
    """
    manifest = None
    with open(path) as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        manifest = json.loads(lines[0].split(":", 1)[1])
        lines = lines[1:]
    header = lines[0].split(",")
    if not numeric:
        return manifest, header, [ln.split(",") for ln in lines[1:] if ln]
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:] if ln]
    return manifest, header, np.array(rows).reshape(len(rows), len(header))
