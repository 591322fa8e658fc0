"""Truncated Fourier lattice bookkeeping for divergence-free fields on the torus.

All state lives on the canonical half-lattice: wavevectors k with
|k|_inf <= N, k != 0, whose first nonzero component is positive, ordered
lexicographically on (k1, k2, k3).  The implied full-lattice field is
recovered through conjugate symmetry, so reality of the physical field is
structural.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import next_fast_len


def _is_canonical(k: tuple[int, int, int]) -> bool:
    for c in k:
        if c != 0:
            return c > 0
    return False


@dataclass(frozen=True)
class LatticeTable:
    """Precomputed index tables for one truncation radius.

    The FFT grid has ``grid_size >= 3N+1`` points per axis, which makes the
    pseudo-spectral product of two truncated fields equal to the exact
    convolution on every retained mode (no aliasing at all).
    """

    n_modes: int
    k: np.ndarray            # (M, 3) int64, canonical half-lattice
    k_sq: np.ndarray         # (M,) float64, Euclidean |k|^2
    k_inf: np.ndarray        # (M,) int64, |k|_inf
    shell: np.ndarray        # (M,) int64, floor(|k|)
    basis: np.ndarray        # (M, 2, 3) float64, orthonormal basis of plane perp k
    grid_size: int
    # scatter table: coefficient -> rfft-layout array
    emb_src: np.ndarray = field(repr=False, default=None)   # (P,) rows into coeffs
    emb_dst: np.ndarray = field(repr=False, default=None)   # (P,) flat grid indices
    emb_conj: np.ndarray = field(repr=False, default=None)  # (P,) bool, store conj
    # gather table: rfft-layout array -> coefficient
    ext_idx: np.ndarray = field(repr=False, default=None)   # (M,) flat grid indices
    ext_conj: np.ndarray = field(repr=False, default=None)  # (M,) bool

    @property
    def n_half(self) -> int:
        return self.k.shape[0]

    def index_of(self, k: tuple[int, int, int]) -> int:
        """Row of a canonical wavevector; raises KeyError when not stored."""
        key = tuple(int(c) for c in k)
        try:
            return self._lookup[key]
        except KeyError:
            raise KeyError(f"wavevector {key} not on the canonical half-lattice")

    def __post_init__(self):
        lookup = {tuple(int(c) for c in row): i for i, row in enumerate(self.k)}
        object.__setattr__(self, "_lookup", lookup)


def _orthonormal_pair(k: np.ndarray) -> np.ndarray:
    """Deterministic orthonormal basis of the plane orthogonal to k."""
    a = np.array([1.0, 0.0, 0.0])
    if k[1] == 0 and k[2] == 0:
        a = np.array([0.0, 1.0, 0.0])
    e1 = np.cross(k, a)
    e1 = e1 / np.linalg.norm(e1)
    e2 = np.cross(k, e1)
    e2 = e2 / np.linalg.norm(e2)
    return np.stack([e1, e2])


_TABLES: dict[int, LatticeTable] = {}


def get_table(n_modes: int) -> LatticeTable:
    if n_modes < 1:
        raise ValueError(f"truncation radius must be >= 1, got {n_modes}")
    if n_modes in _TABLES:
        return _TABLES[n_modes]
    n = n_modes
    rng = range(-n, n + 1)
    half = sorted(
        (a, b, c)
        for a in rng for b in rng for c in rng
        if _is_canonical((a, b, c))
    )
    k = np.array(half, dtype=np.int64)
    k_sq = (k.astype(np.float64) ** 2).sum(axis=1)
    k_inf = np.abs(k).max(axis=1)
    shell = np.floor(np.sqrt(k_sq)).astype(np.int64)
    basis = np.stack([_orthonormal_pair(row.astype(np.float64)) for row in k])

    g = next_fast_len(3 * n + 1)
    gh = g // 2 + 1

    def flat(k1, k2, k3):
        return (k1 % g) * g * gh + (k2 % g) * gh + k3

    src, dst, conj = [], [], []
    ext_idx = np.empty(len(half), dtype=np.int64)
    ext_conj = np.zeros(len(half), dtype=bool)
    for i, (k1, k2, k3) in enumerate(half):
        if k3 > 0:
            src.append(i); dst.append(flat(k1, k2, k3)); conj.append(False)
            ext_idx[i] = flat(k1, k2, k3)
        elif k3 < 0:
            src.append(i); dst.append(flat(-k1, -k2, -k3)); conj.append(True)
            ext_idx[i] = flat(-k1, -k2, -k3)
            ext_conj[i] = True
        else:
            # k3 == 0 plane must be explicitly Hermitian in (k1, k2)
            src.append(i); dst.append(flat(k1, k2, 0)); conj.append(False)
            src.append(i); dst.append(flat(-k1, -k2, 0)); conj.append(True)
            ext_idx[i] = flat(k1, k2, 0)

    table = LatticeTable(
        n_modes=n,
        k=k,
        k_sq=k_sq,
        k_inf=k_inf,
        shell=shell,
        basis=basis,
        grid_size=g,
        emb_src=np.array(src, dtype=np.int64),
        emb_dst=np.array(dst, dtype=np.int64),
        emb_conj=np.array(conj, dtype=bool),
        ext_idx=ext_idx,
        ext_conj=ext_conj,
    )
    _TABLES[n_modes] = table
    return table


def embed(table: LatticeTable, coeffs: np.ndarray) -> np.ndarray:
    """Scatter stacked coefficient arrays (..., M) onto the rfft grid layout.

    Returns an array of shape coeffs.shape[:-1] + (G, G, G//2+1).
    """
    g, gh = table.grid_size, table.grid_size // 2 + 1
    lead = coeffs.shape[:-1]
    out = np.zeros(lead + (g * g * gh,), dtype=np.complex128)
    vals = coeffs[..., table.emb_src]
    np.conjugate(vals, where=table.emb_conj, out=vals)
    out[..., table.emb_dst] = vals
    return out.reshape(lead + (g, g, gh))


def extract(table: LatticeTable, grid: np.ndarray) -> np.ndarray:
    """Gather retained-mode coefficients (..., M) back from the rfft layout."""
    lead = grid.shape[:-3]
    flatg = grid.reshape(lead + (-1,))
    vals = flatg[..., table.ext_idx].copy()
    np.conjugate(vals, where=table.ext_conj, out=vals)
    return vals
