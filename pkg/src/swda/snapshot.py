"""
SWDA field snapshot files.

Binary layout: magic b"SWDA", format version u16, nx u32, ny u32, field
count u32, then one row-major little-endian float64 payload per field.
A sidecar text file at <path>.names lists the field names, one per line,
in payload order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .grid import Grid

MAGIC = b"SWDA"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")


class SnapshotError(Exception):
    """Malformed or inconsistent snapshot file."""


def write_snapshot(path: str | Path, grid: Grid, fields: dict[str, np.ndarray]) -> None:
    """Write named fields to an SWDA file plus its sidecar name list."""
    path = Path(path)
    names = list(fields)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, grid.nx, grid.ny, len(names)))
        for name in names:
            arr = np.ascontiguousarray(fields[name], dtype="<f8")
            if arr.shape != grid.shape:
                raise SnapshotError(f"field {name!r} shape {arr.shape} != {grid.shape}")
            fh.write(arr.tobytes())
    Path(str(path) + ".names").write_text("\n".join(names) + "\n")


def read_snapshot(path: str | Path) -> tuple[Grid, dict[str, np.ndarray]]:
    """Read an SWDA file back into (grid, {name: field})."""
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise SnapshotError(f"{path}: truncated header")
    magic, version, nx, ny, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SnapshotError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise SnapshotError(f"{path}: unsupported version {version}")
    grid = Grid(nx=nx, ny=ny)
    per_field = nx * ny * 8
    expected = _HEADER.size + count * per_field
    if len(raw) != expected:
        raise SnapshotError(f"{path}: expected {expected} bytes, got {len(raw)}")

    names_path = Path(str(path) + ".names")
    if names_path.exists():
        names = names_path.read_text().split()
    else:
        names = [f"field_{i}" for i in range(count)]
    if len(names) != count:
        raise SnapshotError(
            f"{path}: sidecar lists {len(names)} names for {count} fields"
        )

    fields: dict[str, np.ndarray] = {}
    off = _HEADER.size
    for name in names:
        arr = np.frombuffer(raw, dtype="<f8", count=nx * ny, offset=off)
        fields[name] = arr.reshape(ny, nx).astype(np.float64)
        off += per_field
    return grid, fields


def write_state_snapshot(path: str | Path, state) -> None:
    write_snapshot(path, state.grid, {"u": state.u, "v": state.v, "eta": state.eta})


def read_state_snapshot(path: str | Path):
    from .dynamics import State

    grid, fields = read_snapshot(path)
    missing = {"u", "v", "eta"} - set(fields)
    if missing:
        raise SnapshotError(f"{path}: missing state fields {sorted(missing)}")
    return State(fields["u"], fields["v"], fields["eta"], grid)


def write_metadata(path: str | Path, entries: dict[str, object]) -> None:
    """Plain key = value text metadata, one entry per line."""
    lines = [f"{k} = {v}" for k, v in entries.items()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_metadata(path: str | Path) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out
