"""Bit-exact binary snapshot format for spectral states.

Layout (little-endian): magic "NSMK1", u32 N, f64 nu, f64 sim-time, u64 seed,
then the coefficient payload in canonical half-lattice order as interleaved
f64 (re, im) for each of the three components.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .field import SpectralField
from .lattice import get_table

MAGIC = b"NSMK1"
_HEADER = struct.Struct("<5sIddQ")


class SnapshotFormatError(Exception):
    pass


@dataclass(frozen=True)
class SnapshotMeta:
    n_modes: int
    nu: float
    sim_time: float
    seed: int


def write_snapshot(path, x: SpectralField, nu: float, sim_time: float, seed: int):
    payload = np.empty((x.coeffs.shape[0], 6), dtype="<f8")
    payload[:, 0::2] = x.coeffs.real
    payload[:, 1::2] = x.coeffs.imag
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, x.n_modes, nu, sim_time, seed))
        fh.write(payload.tobytes())


def read_snapshot(path) -> tuple[SpectralField, SnapshotMeta]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise SnapshotFormatError(f"{path}: truncated header")
        magic, n, nu, sim_time, seed = _HEADER.unpack(head)
        if magic != MAGIC:
            raise SnapshotFormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        table = get_table(int(n))
        raw = fh.read()
    expected = table.n_half * 6 * 8
    if len(raw) != expected:
        raise SnapshotFormatError(
            f"{path}: payload has {len(raw)} bytes, expected {expected} for N={n}"
        )
    flat = np.frombuffer(raw, dtype="<f8").reshape(table.n_half, 6)
    coeffs = flat[:, 0::2] + 1j * flat[:, 1::2]
    meta = SnapshotMeta(n_modes=int(n), nu=float(nu), sim_time=float(sim_time), seed=int(seed))
    return SpectralField(int(n), coeffs), meta


def load_state_for_run(path, n_modes: int) -> SpectralField:
    """Read a snapshot and require it to match the run's truncation."""
    x, meta = read_snapshot(path)
    if meta.n_modes != n_modes:
        raise SnapshotFormatError(
            f"{path}: snapshot truncation N={meta.n_modes} does not match run N={n_modes}"
        )
    return x
