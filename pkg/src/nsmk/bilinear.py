"""Pseudo-spectral convective term with exact dealiasing.

The physical grid has at least 3N+1 points per axis, so products of two
truncated fields are alias-free and the result equals the exact triad
convolution on every retained mode.  That is what makes skew-symmetry of the
trilinear form hold to machine precision instead of approximately.
"""

from __future__ import annotations

import numpy as np
from scipy.fft import fftn, ifftn, irfft, rfft

from .field import SpectralField, project_field_coeffs
from .lattice import embed, extract, get_table


def grid_to_physical(emb: np.ndarray, g: int) -> np.ndarray:
    """Inverse transform of stacked rfft-layout spectra to physical space.

    Split into a c2c pass over the first two grid axes and a c2r pass over
    the last: identical result, much cheaper than the fused call at the
    small sizes used here.
    """
    tmp = ifftn(emb, axes=(-3, -2), norm="forward")
    return irfft(tmp, n=g, axis=-1, norm="forward")


def physical_to_grid(w: np.ndarray) -> np.ndarray:
    """Forward transform of stacked physical fields to rfft layout."""
    tmp = rfft(w, axis=-1, norm="forward")
    return fftn(tmp, axes=(-3, -2), norm="forward")


def _check_same(u: SpectralField, v: SpectralField):
    if u.n_modes != v.n_modes:
        raise ValueError(f"truncation mismatch: {u.n_modes} vs {v.n_modes}")


def nonlinearity(u: SpectralField, v: SpectralField) -> SpectralField:
    """Leray-projected convective term P[(u . grad) v].

    Fourier form: B(u, v)_k = P_k sum_{l+m=k} i (u_l . m) v_m.
    """
    _check_same(u, v)
    table = get_table(u.n_modes)
    g = table.grid_size
    ik = 1j * table.k.astype(np.float64)  # (M, 3)
    # 12 spectral inputs: u_j and d_j v_i = i k_j v_i on the half-lattice
    stack = np.empty((12, table.n_half), dtype=np.complex128)
    stack[0:3] = u.coeffs.T
    for i in range(3):
        for j in range(3):
            stack[3 + 3 * i + j] = ik[:, j] * v.coeffs[:, i]
    phys = grid_to_physical(embed(table, stack), g)
    w = np.empty((3, g, g, g))
    for i in range(3):
        w[i] = (phys[0] * phys[3 + 3 * i]
                + phys[1] * phys[4 + 3 * i]
                + phys[2] * phys[5 + 3 * i])
    out = extract(table, physical_to_grid(w))
    return SpectralField(u.n_modes, project_field_coeffs(table, out.T.copy()))


def b_self_coeffs(table, c: np.ndarray, scratch: np.ndarray | None = None) -> np.ndarray:
    """Raw-coefficient B(u, u) via the rotational form; hot path of the stepper.

    ``scratch`` may hold a reusable (6, G, G, G//2+1) complex buffer.
    """
    g = table.grid_size
    k = table.k.astype(np.float64)
    stack = np.empty((6, table.n_half), dtype=np.complex128)
    stack[0:3] = c.T
    # curl in spectral form: (i k) x u
    stack[3] = 1j * (k[:, 1] * c[:, 2] - k[:, 2] * c[:, 1])
    stack[4] = 1j * (k[:, 2] * c[:, 0] - k[:, 0] * c[:, 2])
    stack[5] = 1j * (k[:, 0] * c[:, 1] - k[:, 1] * c[:, 0])
    if scratch is None:
        emb = embed(table, stack)
    else:
        flat = scratch.reshape(6, -1)
        flat[:] = 0.0
        vals = stack[:, table.emb_src]
        np.conjugate(vals, where=table.emb_conj, out=vals)
        flat[:, table.emb_dst] = vals
        emb = scratch
    phys = grid_to_physical(emb, g)
    w = np.empty((3, g, g, g))
    w[0] = phys[4] * phys[2] - phys[5] * phys[1]
    w[1] = phys[5] * phys[0] - phys[3] * phys[2]
    w[2] = phys[3] * phys[1] - phys[4] * phys[0]
    out = extract(table, physical_to_grid(w))
    return project_field_coeffs(table, out.T.copy())


def nonlinearity_self(u: SpectralField) -> SpectralField:
    """B(u, u) through the rotational form P[curl(u) x u].

    Algebraically identical to ``nonlinearity(u, u)`` because the Leray
    projection annihilates the gradient part; costs 9 transforms instead
    of 15.  Used by the time stepper.
    """
    table = get_table(u.n_modes)
    return SpectralField(u.n_modes, b_self_coeffs(table, u.coeffs))


def nonlinearity_oracle(u: SpectralField, v: SpectralField) -> SpectralField:
    """Brute-force triad convolution, independent of the FFT path.

    Sums i (u_l . m) v_m over all lattice pairs l + m = k directly; O(M^2),
    intended for N <= 4 cross-checks.
    """
    _check_same(u, v)
    table = get_table(u.n_modes)
    n = u.n_modes
    span = 2 * n + 1

    def code(vec):
        return ((vec[..., 0] + n) * span + (vec[..., 1] + n)) * span + (vec[..., 2] + n)

    # full-lattice arrays: canonical rows then conjugate rows
    kf = np.concatenate([table.k, -table.k])
    uf = np.concatenate([u.coeffs, np.conj(u.coeffs)])
    vf = np.concatenate([v.coeffs, np.conj(v.coeffs)])
    row = -np.ones(span ** 3, dtype=np.int64)
    row[code(kf)] = np.arange(kf.shape[0])

    out = np.zeros((table.n_half, 3), dtype=np.complex128)
    for i, kk in enumerate(table.k):
        m = kk[None, :] - kf  # candidate second legs, l = kf
        ok = (np.abs(m).max(axis=1) <= n) & np.any(m != 0, axis=1)
        mi = row[code(m[ok])]
        lm = m[ok].astype(np.float64)
        coupling = 1j * (uf[ok] * lm).sum(axis=1)
        out[i] = (coupling[:, None] * vf[mi]).sum(axis=0)
    return SpectralField(u.n_modes, project_field_coeffs(table, out))
