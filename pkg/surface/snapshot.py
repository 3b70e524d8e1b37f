"""
Snapshot files.
曲面模組 - 快照檔讀寫

Layout: one ASCII header line ``MUSKAT3D v1 n=<n> L=<L> t=<t>`` followed by
n² records of three little-endian float64 values (U₁, U₂, U₃), row-major
over the nodes (α₁ index outer). Floats in the header use ``repr`` so a
save → load → save cycle is byte-identical.
"""

import re
from pathlib import Path

import numpy as np

from core.exceptions import InvalidFieldError, SnapshotFormatError
from spectral.grid import ParamGrid
from .state import SurfaceState

MAGIC = 'MUSKAT3D'
VERSION = 'v1'
RECORD = np.dtype('<f8')
MAX_HEADER = 256

HEADER_PATTERN = re.compile(
    r'^MUSKAT3D v1 n=(?P<n>\d+) L=(?P<L>\S+) t=(?P<t>\S+)$'
)


def encode_header(state):
    return f'{MAGIC} {VERSION} n={state.grid.n} L={float(state.grid.L)!r} t={state.t!r}\n'


def encode_snapshot(state):
    payload = np.ascontiguousarray(np.moveaxis(state.U, 0, -1), dtype=RECORD)
    return encode_header(state).encode('ascii') + payload.tobytes()


def write_snapshot(path, state):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_snapshot(state))
    return path


def _parse_float(text, name, offset):
    try:
        value = float(text)
    except ValueError:
        raise SnapshotFormatError(f'header field {name} is not a number: {text!r}', offset=offset)
    if not np.isfinite(value):
        raise SnapshotFormatError(f'header field {name} is not finite', offset=offset)
    return value


def decode_snapshot(data, periodic=False):
    end = data.find(b'\n', 0, MAX_HEADER)
    if end < 0:
        raise SnapshotFormatError('missing header line', offset=min(len(data), MAX_HEADER))
    try:
        header = data[:end].decode('ascii')
    except UnicodeDecodeError as exc:
        raise SnapshotFormatError('header is not ASCII', offset=exc.start)
    if not header.startswith(MAGIC):
        raise SnapshotFormatError(f'bad magic, expected {MAGIC!r}', offset=0)
    match = HEADER_PATTERN.match(header)
    if match is None:
        raise SnapshotFormatError(f'malformed header {header!r}', offset=0)

    L = _parse_float(match['L'], 'L', match.start('L'))
    t = _parse_float(match['t'], 't', match.start('t'))
    try:
        grid = ParamGrid(int(match['n']), L)
    except InvalidFieldError as exc:
        raise SnapshotFormatError(str(exc), offset=match.start('n'))

    start = end + 1
    expected = grid.n * grid.n * 3 * RECORD.itemsize
    available = len(data) - start
    if available < expected:
        raise SnapshotFormatError(
            f'truncated payload: expected {expected} bytes, found {available}', offset=len(data),
        )
    if available > expected:
        raise SnapshotFormatError(
            f'{available - expected} trailing bytes after payload', offset=start + expected,
        )

    values = np.frombuffer(data, dtype=RECORD, count=grid.n * grid.n * 3, offset=start)
    bad = ~np.isfinite(values)
    if bad.any():
        first = int(np.argmax(bad))
        raise SnapshotFormatError(
            'non-finite value in payload', offset=start + first * RECORD.itemsize,
        )
    U = np.moveaxis(values.reshape(grid.n, grid.n, 3), -1, 0).astype(np.float64)
    return SurfaceState(grid, U, periodic=periodic, t=t)


def read_snapshot(path, periodic=False):
    return decode_snapshot(Path(path).read_bytes(), periodic=periodic)
