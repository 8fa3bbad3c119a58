"""Field serialization: flat little-endian binary container and CSV export.

Binary layout: int64 dim, int64 M, float64 L, float64 s, float64 sigma,
then M^dim interleaved (re, im) float64 pairs in row-major order.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import InputError
from .fracops import FieldOnGrid, Grid

_HEADER = struct.Struct("<qqddd")


def write_field(path, u: FieldOnGrid, s: float, sigma: float) -> None:
    g = u.grid
    body = np.empty(u.values.size * 2, dtype="<f8")
    flat = u.values.ravel(order="C")
    body[0::2] = flat.real
    body[1::2] = flat.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.dim, g.points, g.half_length, float(s), float(sigma)))
        fh.write(body.tobytes())


def read_field(path):
    """Return (field, s, sigma)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InputError(f"{path}: truncated header")
    dim, m, half, s, sigma = _HEADER.unpack_from(raw)
    grid = Grid(int(dim), half, int(m))
    n = m ** dim
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != 2 * n:
        raise InputError(f"{path}: expected {2 * n} floats, found {body.size}")
    vals = (body[0::2] + 1j * body[1::2]).reshape(grid.shape)
    return FieldOnGrid(grid, vals), s, sigma


def write_field_csv(path, u: FieldOnGrid) -> None:
    g = u.grid
    names = ["x", "y"][: g.dim] + ["re", "im"]
    cols = [c.ravel() for c in g.coords] + [u.values.real.ravel(), u.values.imag.ravel()]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        w.writerows(zip(*(map(repr, map(float, c)) for c in cols)))


def write_table(path, header, rows) -> None:
    """RFC 4180 CSV with repr-formatted floats so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
