"""CSV and metadata writers for fields and traces.

Fields are written as ``x[,y[,z]],value`` rows over interior and boundary
nodes in lattice order; traces as ``iter,residual_sup[,extra...]``.  Floats
use 17 significant digits so that a read-write cycle is exact.  Every file
gets a ``<name>.json`` sidecar with the resolved configuration.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from . import __version__
from .core import ScalarField

FMT = "%.17g"
AXES = ("x", "y", "z")


class OutputError(OSError):
    pass


def _fmt(v: float) -> str:
    return FMT % v


def _open(path: Path):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e}") from e


def emit_field(field: ScalarField, path, meta: Optional[Mapping] = None) -> Path:
    """Write the interior and boundary values of ``field`` as CSV.

    Raises
    ------
    ValueError
        If a written value is not finite.
    """
    path = Path(path)
    mask = field.mask
    idx = np.sort(mask.active)
    x = mask.grid.coords()[idx]
    v = field.values[idx]
    if not np.all(np.isfinite(v)):
        raise ValueError("field has non-finite values on the mask")
    return emit_table(AXES[: x.shape[1]] + ("value",), np.column_stack([x, v]), path, meta)


def emit_table(header: Sequence[str], rows, path, meta: Optional[Mapping] = None) -> Path:
    path = Path(path)
    with _open(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(float(c)) if _is_num(c) else str(c) for c in row) + "\n")
    if meta is not None:
        emit_meta(meta, path)
    return path


def _is_num(c) -> bool:
    return isinstance(c, (int, float, np.integer, np.floating)) and not isinstance(c, bool)


def emit_trace(residuals: Sequence[float], path, extra: Optional[Mapping[str, Sequence]] = None,
               meta: Optional[Mapping] = None) -> Path:
    """Write ``iter,residual_sup[,extra...]``."""
    extra = dict(extra or {})
    header = ["iter", "residual_sup"] + list(extra)
    rows = [[i, r] + [extra[k][i] for k in extra] for i, r in enumerate(residuals)]
    path = Path(path)
    with _open(path) as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(str(row[0]) + "," + ",".join(_fmt(float(c)) for c in row[1:]) + "\n")
    if meta is not None:
        emit_meta(meta, path)
    return path


def emit_meta(meta: Mapping, path) -> Path:
    side = Path(str(path) + ".json")
    record = {"tool": "inflap", "version": __version__, **meta}
    with _open(side) as fh:
        json.dump(_plain(record), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return side


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else str(f)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def read_table(path):
    """``(header, rows)`` with numeric cells parsed as floats."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(c) for c in row] for row in reader]
    return header, np.array(rows, dtype=float).reshape(-1, len(header))


def read_field(path):
    """``(coords, values)`` from a field CSV."""
    header, data = read_table(path)
    if header[-1] != "value":
        raise ValueError(f"{path} is not a field file")
    return data[:, :-1], data[:, -1]
