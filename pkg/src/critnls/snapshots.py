"""On-disk formats: raw field snapshots with JSON sidecars, CSV and atomic writes."""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .grid import Field, Frame, GridSpec


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    """Write to a temporary sibling and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj) -> str:
    """Deterministic JSON text (sorted keys, fixed float repr)."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n"


def _paths(stem: str | os.PathLike) -> tuple[Path, Path]:
    stem = Path(stem)
    if stem.suffix in (".bin", ".json"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".bin"), stem.with_suffix(".json")


def save_field(field: Field, stem: str | os.PathLike, b: float | None = None) -> tuple[Path, Path]:
    """Store a field as little-endian float64 (re, im) pairs plus a header.

    The header holds ``dimension, M, L, frame, time, b``.
    """
    bin_path, json_path = _paths(stem)
    values = np.asarray(field.values, dtype=np.complex128).ravel()
    pairs = np.empty(2 * values.size, dtype="<f8")
    pairs[0::2] = values.real
    pairs[1::2] = values.imag
    header = {
        "dimension": field.grid.dimension,
        "M": field.grid.points,
        "L": field.grid.half_width,
        "frame": field.frame.value,
        "time": field.time,
        "b": b,
    }
    atomic_write_bytes(bin_path, pairs.tobytes())
    atomic_write_text(json_path, dump_json(header))
    return bin_path, json_path


def load_field(stem: str | os.PathLike) -> tuple[Field, float | None]:
    """Inverse of :func:`save_field`; returns the field and the stored ``b``."""
    bin_path, json_path = _paths(stem)
    header = json.loads(json_path.read_text())
    grid = GridSpec(int(header["dimension"]), float(header["L"]), int(header["M"]))
    pairs = np.frombuffer(bin_path.read_bytes(), dtype="<f8")
    if pairs.size != 2 * grid.size:
        raise ValueError(f"{bin_path}: expected {2 * grid.size} floats, found {pairs.size}")
    values = pairs[0::2] + 1j * pairs[1::2]
    field = Field(grid, values.reshape(grid.shape), Frame(header["frame"]), float(header["time"]))
    b = header.get("b")
    return field, (None if b is None else float(b))


def field_csv(field: Field) -> str:
    """Columns ``x, re, im`` for a one-dimensional field."""
    if field.grid.dimension != 1:
        raise ValueError("CSV export is only defined for one-dimensional fields")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "re", "im"])
    values = np.asarray(field.values, dtype=complex)
    for x, z in zip(field.grid.axis, values):
        writer.writerow([repr(float(x)), repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()


def rows_csv(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()
