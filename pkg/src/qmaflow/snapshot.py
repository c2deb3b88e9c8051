"""Field snapshot files.

Layout: magic bytes ``QMAFLD01``, a 4-byte little-endian header length, a
JSON header ``{"n", "grid", "periods", "name", "dtype": "f64",
"order": "row-major", ...}``, then the raw little-endian float64 payload in
row-major order. Extra header keys (e.g. a config hash) are allowed; files
are self-describing.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import SnapshotError
from .fields import ScalarField
from .geometry import TorusGeometry, build_flat_torus
from .serialize import dumps17

MAGIC = b"QMAFLD01"


def write_scalar_field(path, field: ScalarField, name: str, extra: dict | None = None) -> None:
    geom = field.geometry
    header = {
        "n": geom.n,
        "grid": list(geom.grid_shape),
        "periods": list(geom.periods),
        "name": name,
        "dtype": "f64",
        "order": "row-major",
    }
    if extra:
        header.update(extra)
    header_bytes = dumps17(header).encode("utf-8")
    payload = np.ascontiguousarray(field.values, dtype="<f8").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(payload)


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise SnapshotError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
    return header


def read_scalar_field(path, geometry: TorusGeometry | None = None) -> ScalarField:
    """Load a scalar field; validates against ``geometry`` when given."""
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise SnapshotError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (length,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(length).decode("utf-8"))
        payload = fh.read()
    if header.get("dtype") != "f64":
        raise SnapshotError(f"{path}: unsupported dtype {header.get('dtype')!r}")
    grid = tuple(int(v) for v in header["grid"])
    values = np.frombuffer(payload, dtype="<f8")
    expected = int(np.prod(grid))
    if values.size != expected:
        raise SnapshotError(
            f"{path}: payload holds {values.size} samples, header grid implies {expected}"
        )
    values = values.reshape(grid).astype(float)
    if geometry is not None:
        if int(header["n"]) != geometry.n:
            raise SnapshotError(
                f"{path}: snapshot n = {header['n']} but geometry has n = {geometry.n}"
            )
        if grid != geometry.grid_shape:
            raise SnapshotError(
                f"{path}: snapshot grid {grid} but geometry grid {geometry.grid_shape}"
            )
        periods = tuple(float(v) for v in header["periods"])
        if not np.allclose(periods, geometry.periods, rtol=0, atol=1e-12):
            raise SnapshotError(
                f"{path}: snapshot periods {periods} but geometry periods {geometry.periods}"
            )
        geom = geometry
    else:
        geom = build_flat_torus(int(header["n"]), grid, [float(v) for v in header["periods"]])
    return ScalarField(geom, values)
