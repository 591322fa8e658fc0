"""Divergence-free, mean-zero spectral velocity fields and their linear operators.

A field is a complex coefficient array on the canonical half-lattice; the
physical field is real by construction.  The ``H`` inner product is the plain
l2 sum of Fourier coefficients over the full lattice (conjugate pairs counted
twice, no volume factor); every norm and trace in the package uses this one
convention.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .lattice import LatticeTable, get_table

DEBUG_VALIDATE = bool(int(os.environ.get("NSMK_DEBUG", "0")))

_DIV_TOL = 1e-10


def theta_map(alpha: float) -> float:
    """Regularity exponent of the strong spaces: (a+1)/2 below 1/2, a+1/4 above."""
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    if alpha < 0.5:
        return (alpha + 1.0) / 2.0
    return alpha + 0.25


@dataclass(frozen=True)
class SpaceTag:
    """Selects the norm |A^theta x|_H of a fractional power domain."""

    kind: str
    param: float = 0.0

    @property
    def theta(self) -> float:
        if self.kind == "H":
            return 0.0
        if self.kind == "V":
            return 0.5
        if self.kind == "Veps":
            return 0.25 + self.param
        if self.kind == "Walpha":
            return theta_map(self.param)
        if self.kind == "power":
            return self.param
        raise ValueError(f"unknown space tag {self.kind!r}")


H_SPACE = SpaceTag("H")
V_SPACE = SpaceTag("V")


def veps_space(eps: float) -> SpaceTag:
    if not 0.0 < eps <= 0.25:
        raise ValueError(f"mild-regularity index must lie in (0, 1/4], got {eps}")
    return SpaceTag("Veps", eps)


def walpha_space(alpha: float) -> SpaceTag:
    if alpha <= 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return SpaceTag("Walpha", alpha)


def power_space(theta: float) -> SpaceTag:
    return SpaceTag("power", theta)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Immutable truncated velocity field: coeffs[i] is the complex 3-vector
    at the i-th canonical wavevector."""

    n_modes: int
    coeffs: np.ndarray  # (M, 3) complex128

    def __post_init__(self):
        table = get_table(self.n_modes)
        c = np.ascontiguousarray(self.coeffs, dtype=np.complex128)
        if c.shape != (table.n_half, 3):
            raise ValueError(
                f"coefficient array must have shape {(table.n_half, 3)}, got {c.shape}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)
        if DEBUG_VALIDATE:
            validate(self)

    @property
    def table(self) -> LatticeTable:
        return get_table(self.n_modes)

    def mode(self, k) -> np.ndarray:
        """Coefficient at any nonzero lattice wavevector (conjugated if needed)."""
        kk = tuple(int(c) for c in k)
        table = self.table
        try:
            return self.coeffs[table.index_of(kk)]
        except KeyError:
            neg = tuple(-c for c in kk)
            return np.conj(self.coeffs[table.index_of(neg)])


def zero_field(n_modes: int) -> SpectralField:
    table = get_table(n_modes)
    return SpectralField(n_modes, np.zeros((table.n_half, 3), dtype=np.complex128))


def single_mode_field(n_modes: int, k, amplitude) -> SpectralField:
    """Field with one canonical mode set (and its conjugate implied).

    The amplitude is projected onto the divergence-free plane at k.
    """
    table = get_table(n_modes)
    i = table.index_of(tuple(int(c) for c in k))
    c = np.zeros((table.n_half, 3), dtype=np.complex128)
    c[i] = leray_project(np.asarray(k, dtype=np.float64), np.asarray(amplitude, dtype=np.complex128))
    return SpectralField(n_modes, c)


def random_field(n_modes: int, seed: int, h_norm: float = 1.0, decay: float = 2.0) -> SpectralField:
    """Gaussian divergence-free field with per-mode std |k|^-decay, rescaled
    to the requested H norm.  Deterministic in the seed."""
    table = get_table(n_modes)
    gen = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    z = gen.standard_normal((table.n_half, 4))
    amp = table.k_sq[:, None] ** (-decay / 2.0)
    c = amp * ((z[:, 0] + 1j * z[:, 1])[:, None] * table.basis[:, 0]
               + (z[:, 2] + 1j * z[:, 3])[:, None] * table.basis[:, 1])
    x = SpectralField(n_modes, c)
    h = norm(x, H_SPACE)
    if h == 0.0:
        return x
    return scale(x, h_norm / h)


def scale(x: SpectralField, s: complex) -> SpectralField:
    return SpectralField(x.n_modes, x.coeffs * s)


def add(x: SpectralField, y: SpectralField) -> SpectralField:
    _check_same(x, y)
    return SpectralField(x.n_modes, x.coeffs + y.coeffs)


def subtract(x: SpectralField, y: SpectralField) -> SpectralField:
    _check_same(x, y)
    return SpectralField(x.n_modes, x.coeffs - y.coeffs)


def _check_same(x: SpectralField, y: SpectralField):
    if x.n_modes != y.n_modes:
        raise ValueError(f"truncation mismatch: {x.n_modes} vs {y.n_modes}")


def validate(x: SpectralField):
    """Assert the structural invariants: finite coefficients, k . x_k = 0."""
    c = x.coeffs
    if not np.all(np.isfinite(c.view(np.float64))):
        raise ValueError("field has non-finite coefficients")
    table = x.table
    div = np.abs((table.k * c).sum(axis=1))
    bound = _DIV_TOL * (1.0 + np.abs(c).sum(axis=1)) * np.sqrt(table.k_sq)
    bad = div > bound
    if np.any(bad):
        i = int(np.argmax(div - bound))
        raise ValueError(
            f"incompressibility violated at k={tuple(table.k[i])}: |k.x_k|={div[i]:.3e}"
        )


def leray_project(k: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Project a single coefficient onto the plane orthogonal to k."""
    k = np.asarray(k, dtype=np.float64)
    ksq = float(k @ k)
    if ksq == 0.0:
        raise ValueError("Leray projection is undefined at k = 0")
    w = np.asarray(w, dtype=np.complex128)
    return w - k * ((k @ w) / ksq)


def project_field_coeffs(table: LatticeTable, c: np.ndarray) -> np.ndarray:
    """Leray-project a full coefficient array (M, 3) in place-free form."""
    kdotw = (table.k * c).sum(axis=1)
    return c - table.k * (kdotw / table.k_sq)[:, None]


def apply_power(x: SpectralField, theta: float) -> SpectralField:
    """Fractional power of the Stokes operator: coefficient at k scaled by |k|^(2 theta)."""
    w = x.table.k_sq ** theta  # |k|^2theta computed as (|k|^2)^theta
    return SpectralField(x.n_modes, x.coeffs * w[:, None])


def heat_regularize(x: SpectralField, a: float) -> SpectralField:
    """Smoothing semigroup exp(-a A^(1/2)): coefficient at k scaled by e^(-a|k|)."""
    if a < 0:
        raise ValueError(f"regularization parameter must be >= 0, got {a}")
    w = np.exp(-a * np.sqrt(x.table.k_sq))
    return SpectralField(x.n_modes, x.coeffs * w[:, None])


def translate(x: SpectralField, a) -> SpectralField:
    """Shift the physical field by a: coefficient at k picks up phase e^(i k.a)."""
    a = np.asarray(a, dtype=np.float64)
    phase = np.exp(1j * (x.table.k @ a))
    return SpectralField(x.n_modes, x.coeffs * phase[:, None])


def project_modes(x: SpectralField, cut: int, side: str = "low") -> SpectralField:
    """Sharp spectral projection at |k|_inf <= cut (low) or > cut (high)."""
    if cut < 0:
        raise ValueError(f"projection level must be >= 0, got {cut}")
    if side == "low":
        keep = x.table.k_inf <= cut
    elif side == "high":
        keep = x.table.k_inf > cut
    else:
        raise ValueError(f"side must be 'low' or 'high', got {side!r}")
    return SpectralField(x.n_modes, np.where(keep[:, None], x.coeffs, 0.0))


def norm_sq_theta(x: SpectralField, theta: float) -> float:
    """|A^theta x|_H^2 summed over the full lattice (pairs counted twice)."""
    w = x.table.k_sq ** (2.0 * theta) if theta != 0.0 else 1.0
    return 2.0 * float(np.sum(w * (np.abs(x.coeffs) ** 2).sum(axis=1)))


def norm(x: SpectralField, tag: SpaceTag = H_SPACE) -> float:
    return float(np.sqrt(norm_sq_theta(x, tag.theta)))


def inner(x: SpectralField, y: SpectralField) -> float:
    """Full-lattice H inner product of two (real) fields."""
    _check_same(x, y)
    return 2.0 * float(np.real(np.sum(x.coeffs * np.conj(y.coeffs))))


def shell_spectrum(x: SpectralField) -> np.ndarray:
    """Energy per integer shell: entry kappa holds sum of |x_k|^2 over
    kappa <= |k| < kappa+1, full lattice.  Entry 0 is always zero."""
    table = x.table
    e = 2.0 * (np.abs(x.coeffs) ** 2).sum(axis=1)
    n_shell = int(np.floor(np.sqrt(3.0) * x.n_modes)) + 1
    return np.bincount(table.shell, weights=e, minlength=n_shell + 1)[: n_shell + 1]
