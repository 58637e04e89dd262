"""File formats: run configs, state dumps, tabulated potentials, CSV tables."""
from __future__ import annotations

import csv
import json
import struct
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .grid import GridSpec
from .spectral import StateVector

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

STATE_MAGIC = b"QSV1"
TABLE_MAGIC = b"QTP1"
_STATE_HEADER = struct.Struct("<4sdII")
_TABLE_HEADER = struct.Struct("<4sdIIId")


def load_config(path) -> dict:
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc


# ---------------------------------------------------------------- state dumps

def write_state(path, state: StateVector):
    """Header (magic, L, N, d) then little-endian complex128 amplitudes in flat-index order."""
    g = state.grid
    amps = np.ascontiguousarray(state.amplitudes, dtype="<c16")
    with open(path, "wb") as fh:
        fh.write(_STATE_HEADER.pack(STATE_MAGIC, g.L, g.N, g.d))
        fh.write(amps.tobytes())


def read_state(path, cap: int | None = None) -> StateVector:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, L, N, d = _STATE_HEADER.unpack_from(raw)
    if magic != STATE_MAGIC:
        raise ConfigurationError(f"{path} is not a state dump")
    grid = GridSpec(L, N, d) if cap is None else GridSpec(L, N, d, cap=cap)
    amps = np.frombuffer(raw, dtype="<c16", offset=_STATE_HEADER.size)
    if amps.size != grid.size:
        raise ConfigurationError(f"{path}: expected {grid.size} amplitudes, found {amps.size}")
    return StateVector(amps.astype(complex), grid)


# ---------------------------------------------------------------- tabulated potentials

def read_potential_table(path, fmt: str | None = None):
    """Return (values of shape (n_t, N_tab**d), L, d, T).

    Text tables start with the header line ``L N_tab d n_t T`` (``#`` comments
    allowed) followed by n_t * N_tab**d values, slice by slice, each slice in
    flat-index order. Binary tables use the same layout after a packed header.
    """
    path = Path(path)
    fmt = fmt or ("binary" if path.suffix in (".bin", ".dat") else "text")
    if fmt == "binary":
        raw = path.read_bytes()
        magic, L, n_tab, d, n_t, T = _TABLE_HEADER.unpack_from(raw)
        if magic != TABLE_MAGIC:
            raise ConfigurationError(f"{path} is not a potential table")
        vals = np.frombuffer(raw, dtype="<f8", offset=_TABLE_HEADER.size)
    elif fmt == "text":
        lines = [ln.split("#", 1)[0].strip() for ln in path.read_text().splitlines()]
        lines = [ln for ln in lines if ln]
        if not lines:
            raise ConfigurationError(f"{path} is empty")
        head = lines[0].split()
        if len(head) != 5:
            raise ConfigurationError("header must read: L N_tab d n_t T")
        L, n_tab, d, n_t, T = float(head[0]), int(head[1]), int(head[2]), int(head[3]), float(head[4])
        vals = np.array(" ".join(lines[1:]).split(), dtype=float)
    else:
        raise ConfigurationError(f"unknown table format {fmt!r}")
    expected = n_t * n_tab ** d
    if vals.size != expected:
        raise ConfigurationError(f"{path}: expected {expected} values, found {vals.size}")
    return vals.reshape(n_t, n_tab ** d).copy(), L, d, T


def write_potential_table(path, values, L: float, d: int, T: float, fmt: str = "text"):
    values = np.asarray(values, dtype=float)
    n_t, size = values.shape
    n_tab = round(size ** (1 / d))
    if fmt == "binary":
        with open(path, "wb") as fh:
            fh.write(_TABLE_HEADER.pack(TABLE_MAGIC, L, n_tab, d, n_t, T))
            fh.write(np.ascontiguousarray(values, dtype="<f8").tobytes())
        return
    with open(path, "w") as fh:
        fh.write("# L N_tab d n_t T\n")
        fh.write(f"{L!r} {n_tab} {d} {n_t} {T!r}\n")
        for row in values:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


# ---------------------------------------------------------------- tables and reports

def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow(row)


def write_samples_csv(path, grid: GridSpec, flat_indices):
    from .grid import unflatten

    pts = grid.points()
    header = [f"i{a + 1}" for a in range(grid.d)] + [f"x{a + 1}" for a in range(grid.d)]
    write_csv(path, header, (list(unflatten(grid, i)) + pts[i].tolist() for i in flat_indices))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_report(report: dict) -> str:
    """Deterministic JSON text (sorted keys, non-finite floats as strings)."""
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def write_report(path, report: dict):
    Path(path).write_text(dumps_report(report))
