"""Additive trace-class Gaussian forcing, diagonal in Fourier space.

The covariance is Q = sigma0^2 A^(-q), acting on each of the two
divergence-free polarizations at every wavevector.  Sampling is
counter-based (Philox keyed by trajectory seed / step / purpose), so a draw
is a pure function of its key: ensembles replay exactly regardless of
worker count or evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import SpectralField
from .lattice import get_table

# purpose tags separating RNG sub-streams within one trajectory
PURPOSE_STEP = 0
PURPOSE_INCREMENT = 1
PURPOSE_INIT = 2


@dataclass(frozen=True)
class CovarianceSpec:
    """Diagonal noise covariance Q = sigma0^2 A^(-q) truncated at n_modes."""

    sigma0: float
    q_exponent: float
    alpha0: float
    n_modes: int

    def __post_init__(self):
        if self.sigma0 <= 0:
            raise ValueError(f"sigma0 must be positive, got {self.sigma0}")
        if self.q_exponent < 0:
            raise ValueError(f"decay exponent must be >= 0, got {self.q_exponent}")


@dataclass(frozen=True)
class AssumptionReport:
    """Regularity ladder for the covariance: a4 => a3 => a2 => a1."""

    a1: bool
    a2: bool
    a3: bool
    a4: bool
    sup_symbol: float     # sup_k |k|^(2(3/4+alpha0)) sigma0 |k|^(-q) on the truncation
    inf_symbol: float
    alpha0_implied: float  # exponent that would make the symbol exactly order one

    def rows(self):
        return [
            ("A1 trace class (2q > 3)", self.a1),
            ("A2 smoothing order 3/4+a0, some a0 > 0", self.a2),
            ("A3 smoothing order 3/4+a0, a0 > 1/6", self.a3),
            ("A4 bounded with bounded inverse", self.a4),
        ]


def normalized_sigma0(q_exponent: float, n_modes: int) -> float:
    """sigma0 making Tr[Q] = 1 on the given truncation."""
    table = get_table(n_modes)
    s = 2.0 * 2.0 * np.sum(table.k_sq ** (-q_exponent))  # pair doubling x 2 polarizations
    return float(1.0 / np.sqrt(s))


def mode_variance(spec: CovarianceSpec, k) -> float:
    """Per-polarization variance q_k = sigma0^2 |k|^(-2q)."""
    k = np.asarray(k, dtype=np.float64)
    ksq = float(k @ k)
    if ksq == 0.0:
        raise ValueError("the zero mode carries no noise (mean-zero constraint)")
    return spec.sigma0 ** 2 * ksq ** (-spec.q_exponent)


def mode_variances(spec: CovarianceSpec) -> np.ndarray:
    table = get_table(spec.n_modes)
    return spec.sigma0 ** 2 * table.k_sq ** (-spec.q_exponent)


def trace(spec: CovarianceSpec, upto: int | None = None) -> float:
    """Tr[Q] over the full lattice; each wavevector carries two polarizations.

    ``upto`` restricts the sum to |k|_inf <= upto.
    """
    table = get_table(spec.n_modes)
    q = mode_variances(spec)
    if upto is not None:
        q = np.where(table.k_inf <= upto, q, 0.0)
    return 2.0 * 2.0 * float(np.sum(q))


def trace_regularized(spec: CovarianceSpec, a: float) -> float:
    """Tr[Q exp(-2a A^(1/2))]: the injection rate seen by the smoothed field."""
    if a < 0:
        raise ValueError(f"regularization parameter must be >= 0, got {a}")
    table = get_table(spec.n_modes)
    damp = np.exp(-2.0 * a * np.sqrt(table.k_sq))
    return 2.0 * 2.0 * float(np.sum(mode_variances(spec) * damp))


def trajectory_key(base_seed: int, traj_index: int) -> np.ndarray:
    """Two-word Philox key for one trajectory of an ensemble."""
    ss = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(traj_index),))
    return ss.generate_state(2, np.uint64)


def standard_normals(key: np.ndarray, step: int, purpose: int, shape) -> np.ndarray:
    """Deterministic N(0,1) draws for (key, step, purpose)."""
    counter = np.array([0, 0, int(step), int(purpose)], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(counter=counter, key=np.asarray(key, dtype=np.uint64)))
    return gen.standard_normal(shape)


def assemble_noise(table, z: np.ndarray, std_per_component: np.ndarray) -> np.ndarray:
    """Combine (M, 4) unit normals into divergence-free complex coefficients.

    ``std_per_component`` scales each real component (Re/Im of each of the
    two polarizations).
    """
    s = std_per_component[:, None]
    return (s * (z[:, 0] + 1j * z[:, 1])[:, None] * table.basis[:, 0]
            + s * (z[:, 2] + 1j * z[:, 3])[:, None] * table.basis[:, 1])


def sample_increment(spec: CovarianceSpec, dt: float, key, step: int = 0) -> SpectralField:
    """One white-noise increment with full-lattice H-covariance Q dt.

    Each real component of each polarization has variance q_k dt / 2, which
    makes E|increment|_H^2 = Tr[Q] dt.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    table = get_table(spec.n_modes)
    key = np.asarray(key, dtype=np.uint64) if np.ndim(key) else trajectory_key(int(key), 0)
    z = standard_normals(key, step, PURPOSE_INCREMENT, (table.n_half, 4))
    std = np.sqrt(mode_variances(spec) * dt / 2.0)
    return SpectralField(spec.n_modes, assemble_noise(table, z, std))


def check_assumptions(spec: CovarianceSpec) -> AssumptionReport:
    """Evaluate the regularity ladder for Q = sigma0^2 A^(-q).

    On the infinite lattice the symbol of A^(3/4+a0) Q^(1/2) is
    sigma0 |k|^(3/2 + 2 a0 - q), so boundedness needs q >= 3/2 + 2 a0 and a
    bounded inverse forces equality.
    """
    q = spec.q_exponent
    a1 = 2.0 * q > 3.0
    a2 = q > 1.5
    a3 = q > 1.5 + 1.0 / 3.0
    alpha0_implied = (q - 1.5) / 2.0
    a4 = (abs(q - (1.5 + 2.0 * spec.alpha0)) < 1e-12) and spec.alpha0 > 1.0 / 6.0
    table = get_table(spec.n_modes)
    symbol = spec.sigma0 * np.sqrt(table.k_sq) ** (1.5 + 2.0 * spec.alpha0 - q)
    return AssumptionReport(
        a1=bool(a1), a2=bool(a2), a3=bool(a3), a4=bool(a4),
        sup_symbol=float(symbol.max()),
        inf_symbol=float(symbol.min()),
        alpha0_implied=float(alpha0_implied),
    )
