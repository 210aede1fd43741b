"""Atomic file output, round-trip CSV and the binary state snapshot.

Snapshot layout (all little-endian)::

    8 bytes   magic b"BRQMSNAP"
    u32       format version (1)
    u32       grid dimension d (0 for grid-free states)
    d x u32   points per axis
    d x f64   length per axis
    u32       fibre dimension
    f64       time
    u64       number of complex values n
    n x c128  state (component-major, axis 0 fastest within a component)
"""

from __future__ import annotations

import contextlib
import csv
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .lattice import Grid

MAGIC = b"BRQMSNAP"
VERSION = 1


def fmt(x: float) -> str:
    """17 significant digits: exact round trip for doubles."""
    return f"{float(x):.17g}"


@contextlib.contextmanager
def atomic_writer(path, mode: str = "w"):
    """Write to a temporary file in the target directory, then rename over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        kwargs = {"newline": ""} if "b" not in mode else {}
        with os.fdopen(fd, mode, **kwargs) as fh:
            yield fh
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(FileNotFoundError):
            os.unlink(tmp)
        raise


def write_text(path, text: str):
    with atomic_writer(path) as fh:
        fh.write(text)


def write_csv(path, header, rows):
    """Rows of floats/ints/strings; floats are written with :func:`fmt`."""
    with atomic_writer(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError(f"{path}: empty CSV")
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def trajectory_rows(times, states, diagnostics=None, *, components: bool = True):
    """Header and rows: ``t``, optional diagnostics, then re/im of every component."""
    diagnostics = diagnostics or {}
    header = ["t"] + list(diagnostics)
    n = np.asarray(states).shape[1]
    if components:
        for i in range(n):
            header += [f"re{i}", f"im{i}"]
    rows = []
    for j, (t, psi) in enumerate(zip(times, states)):
        row = [float(t)] + [float(diagnostics[k][j]) for k in diagnostics]
        if components:
            for z in psi:
                row += [float(z.real), float(z.imag)]
        rows.append(row)
    return header, rows


def write_snapshot(path, state: np.ndarray, time: float, grid: Grid | None, fibre_dim: int):
    state = np.ascontiguousarray(state, dtype="<c16")
    if state.ndim != 1:
        raise ValueError("snapshot state must be one-dimensional")
    expected = fibre_dim * (1 if grid is None else grid.n_sites)
    if state.size != expected:
        raise ValueError(f"state of length {state.size} does not match fibre {fibre_dim} on the grid")
    parts = [MAGIC, struct.pack("<I", VERSION)]
    if grid is None:
        parts.append(struct.pack("<I", 0))
    else:
        d = grid.dim
        parts += [struct.pack("<I", d), struct.pack(f"<{d}I", *grid.shape),
                  struct.pack(f"<{d}d", *grid.lengths)]
    parts += [struct.pack("<I", fibre_dim), struct.pack("<d", time),
              struct.pack("<Q", state.size), state.tobytes()]
    with atomic_writer(path, "wb") as fh:
        fh.write(b"".join(parts))


def read_snapshot(path) -> tuple[np.ndarray, float, Grid | None, int]:
    """Inverse of :func:`write_snapshot`: ``(state, time, grid, fibre_dim)``."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a snapshot file")
    off = 8
    (version,) = struct.unpack_from("<I", data, off)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported snapshot version {version}")
    (d,) = struct.unpack_from("<I", data, off + 4)
    off += 8
    grid = None
    if d:
        shape = struct.unpack_from(f"<{d}I", data, off)
        off += 4 * d
        lengths = struct.unpack_from(f"<{d}d", data, off)
        off += 8 * d
        grid = Grid(tuple(shape), tuple(lengths))
    fibre, t, n = struct.unpack_from("<IdQ", data, off)
    off += struct.calcsize("<IdQ")
    if len(data) - off != 16 * n:
        raise ValueError(f"{path}: truncated snapshot")
    state = np.frombuffer(data, dtype="<c16", count=n, offset=off).astype(complex)
    return state, t, grid, fibre
