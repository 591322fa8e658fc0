"""Time integration of the truncated stochastic equations.

Three systems share one stepper:

* ``full``    du + nu A u dt + B(u,u) dt = Q^(1/2) dW
* ``stokes``  the linear part alone, started from zero
* ``cutoff``  B scaled by chi_R(|u|^2_{V_eps}), the taming device that keeps
              long runs from diverging

The linear-plus-noise part is integrated exactly in law (per-mode
Ornstein-Uhlenbeck transition); the convective term enters through an
explicit phi1-weighted increment, so all time-discretization error sits in
B.  The noise draw for step i depends only on (seed, i): the three systems
driven with one seed see literally the same forcing path.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from . import field as fld
from .bilinear import b_self_coeffs
from .config import RunConfig
from .field import SpectralField
from .lattice import get_table
from .noise import PURPOSE_INIT, PURPOSE_STEP, assemble_noise, mode_variances, standard_normals, trajectory_key


class IntegrationDivergedError(RuntimeError):
    """State left the finite range; carries the last valid time."""

    def __init__(self, time: float, step: int):
        super().__init__(f"integration diverged at t={time:.6g} (step {step})")
        self.time = time
        self.step = step


@dataclass(frozen=True)
class CutoffShape:
    """Smooth cut-off: 1 on [0, 3R/2], 0 on [2R, inf), C-infinity bridge between."""

    level: float

    def __post_init__(self):
        if self.level < 1.0:
            raise ValueError(f"cut-off level must be >= 1, got {self.level}")

    def chi(self, s: float) -> float:
        if s < 0:
            raise ValueError(f"cut-off argument must be >= 0, got {s}")
        r = self.level
        if s <= 1.5 * r:
            return 1.0
        if s >= 2.0 * r:
            return 0.0
        return _glue((2.0 * r - s) / (0.5 * r))

    def chi_prime_max(self, n_grid: int = 20001) -> float:
        """max |chi'| measured on a fine grid of the bridge (scales like 1/R)."""
        s = np.linspace(1.5 * self.level, 2.0 * self.level, n_grid)
        vals = np.array([self.chi(v) for v in s])
        return float(np.max(np.abs(np.diff(vals) / np.diff(s))))


def _bridge_h(t: float) -> float:
    return np.exp(-1.0 / t) if t > 0 else 0.0


def _glue(t: float) -> float:
    """C-infinity step: 0 at t<=0, 1 at t>=1."""
    if t <= 0:
        return 0.0
    if t >= 1:
        return 1.0
    a = _bridge_h(t)
    return a / (a + _bridge_h(1.0 - t))


def chi(shape: CutoffShape, s: float) -> float:
    return shape.chi(s)


@dataclass
class Trajectory:
    """Sampled scalar ledger of one run, plus optional stored states."""

    cfg: RunConfig
    times: np.ndarray
    ledger: dict[str, np.ndarray]
    final_state: SpectralField
    fields: list[SpectralField] | None = None
    snapshots: list[tuple[float, SpectralField]] = dc_field(default_factory=list)

    def __post_init__(self):
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")


class Stepper:
    """Precomputed one-step map for a RunConfig; pure in (state, step index)."""

    def __init__(self, cfg: RunConfig, traj_index: int = 0):
        self.cfg = cfg
        self.table = get_table(cfg.n_modes)
        self.key = trajectory_key(cfg.seed, traj_index)
        lam = cfg.nu * self.table.k_sq
        dt = cfg.dt
        self.decay = np.exp(-lam * dt)[:, None]
        # int_0^dt e^(-lam (dt-s)) ds, stable at small lam dt
        self.phi1dt = (-np.expm1(-lam * dt) / lam)[:, None]
        q_k = mode_variances(cfg.noise_spec)
        # exact OU transition: each real component has variance
        # q_k (1 - e^(-2 lam dt)) / (4 lam), half the per-polarization variance
        self.noise_std = np.sqrt(q_k * (-np.expm1(-2.0 * lam * dt)) / (4.0 * lam))
        self.w_eps = self.table.k_sq ** (2.0 * (0.25 + cfg.eps0))
        self.shape = CutoffShape(cfg.cutoff_r) if cfg.system == "cutoff" else None
        self.with_b = cfg.system in ("full", "cutoff")
        g = self.table.grid_size
        self._scratch = (np.empty((6, g, g, g // 2 + 1), dtype=np.complex128)
                         if self.with_b else None)

    def noise(self, step: int) -> np.ndarray:
        z = standard_normals(self.key, step, PURPOSE_STEP, (self.table.n_half, 4))
        return assemble_noise(self.table, z, self.noise_std)

    def veps_sq(self, coeffs: np.ndarray) -> float:
        return 2.0 * float(np.sum(self.w_eps * (np.abs(coeffs) ** 2).sum(axis=1)))

    def step(self, coeffs: np.ndarray, step_index: int) -> np.ndarray:
        out = self.decay * coeffs
        if self.with_b:
            b = b_self_coeffs(self.table, coeffs, self._scratch)
            if self.shape is not None:
                factor = self.shape.chi(self.veps_sq(coeffs))
                if factor != 1.0:
                    b = b * factor
            out = out - self.phi1dt * b
        return out + self.noise(step_index)


def step_full(x: SpectralField, cfg: RunConfig, step_index: int, traj_index: int = 0) -> SpectralField:
    """One exponential-Euler step of the full system."""
    stepper = Stepper(_as_system(cfg, "full"), traj_index)
    return SpectralField(cfg.n_modes, stepper.step(x.coeffs, step_index))


def step_cutoff(x: SpectralField, cfg: RunConfig, step_index: int, traj_index: int = 0) -> SpectralField:
    """One step of the tamed system; arithmetic path identical to step_full while chi = 1."""
    stepper = Stepper(_as_system(cfg, "cutoff"), traj_index)
    return SpectralField(cfg.n_modes, stepper.step(x.coeffs, step_index))


def _as_system(cfg: RunConfig, system: str) -> RunConfig:
    from dataclasses import replace
    return cfg if cfg.system == system else replace(cfg, system=system)


def resolve_x0(cfg: RunConfig, x0: SpectralField | None) -> SpectralField:
    if cfg.system == "stokes":
        return fld.zero_field(cfg.n_modes)
    if x0 is None:
        return fld.zero_field(cfg.n_modes)
    if x0.n_modes != cfg.n_modes:
        raise ValueError(
            f"initial state truncation {x0.n_modes} does not match config {cfg.n_modes}"
        )
    return x0


def random_x0(cfg: RunConfig, scale: float, traj_index: int = 0) -> SpectralField:
    """Deterministic random initial state with |x0|_H = scale."""
    key = trajectory_key(cfg.seed, traj_index)
    table = get_table(cfg.n_modes)
    z = standard_normals(key, 0, PURPOSE_INIT, (table.n_half, 4))
    amp = table.k_sq[:, None] ** (-1.0)
    c = amp * ((z[:, 0] + 1j * z[:, 1])[:, None] * table.basis[:, 0]
               + (z[:, 2] + 1j * z[:, 3])[:, None] * table.basis[:, 1])
    x = SpectralField(cfg.n_modes, c)
    h = fld.norm(x)
    return fld.scale(x, scale / h) if h > 0 else x


def simulate(cfg: RunConfig, x0: SpectralField | None = None,
             observer=None, traj_index: int = 0) -> Trajectory:
    """Run one trajectory, recording the scalar ledger on the sample grid.

    ``observer(t, field)`` is invoked at every sample time; use it to
    accumulate statistics without storing states.  The stokes system always
    starts from zero.
    """
    state = resolve_x0(cfg, x0).coeffs.copy()
    stepper = Stepper(cfg, traj_index)
    table = stepper.table
    n_steps = cfg.n_steps
    sample_steps = list(range(0, n_steps + 1, cfg.sample_every))
    if sample_steps[-1] != n_steps:
        sample_steps.append(n_steps)
    sample_set = set(sample_steps)

    w_v = table.k_sq
    thetas = cfg.thetas
    w_TH = [table.k_sq ** (2.0 * th) for th in thetas]

    times, h2s, v2s, veps2s = [], [], [], []
    extra = {f"theta2:{th:g}": [] for th in thetas}
    kept_fields = [] if cfg.store_fields else None
    snapshots = []

    def record(i, coeffs):
        t = i * cfg.dt
        e = (np.abs(coeffs) ** 2).sum(axis=1)
        times.append(t)
        h2s.append(2.0 * float(e.sum()))
        v2s.append(2.0 * float((w_v * e).sum()))
        veps2s.append(2.0 * float((stepper.w_eps * e).sum()))
        for th, w in zip(thetas, w_TH):
            extra[f"theta2:{th:g}"].append(2.0 * float((w * e).sum()))
        current = SpectralField(cfg.n_modes, coeffs.copy()) if (
            kept_fields is not None or observer is not None or
            (cfg.snapshot_every and i % max(cfg.snapshot_every, 1) == 0)
        ) else None
        if kept_fields is not None:
            kept_fields.append(current)
        if observer is not None:
            observer(t, current)
        if cfg.snapshot_every and i % cfg.snapshot_every == 0:
            snapshots.append((t, current))

    record(0, state)
    with np.errstate(over="ignore", invalid="ignore"):
        for i in range(n_steps):
            state = stepper.step(state, i)
            if not np.all(np.isfinite(state.view(np.float64))):
                raise IntegrationDivergedError(time=times[-1], step=i)
            if (i + 1) in sample_set:
                record(i + 1, state)

    ledger = {"h2": np.array(h2s), "v2": np.array(v2s), "veps2": np.array(veps2s)}
    for name, vals in extra.items():
        ledger[name] = np.array(vals)
    return Trajectory(
        cfg=cfg,
        times=np.array(times),
        ledger=ledger,
        final_state=SpectralField(cfg.n_modes, state.copy()),
        fields=kept_fields,
        snapshots=snapshots,
    )


def stopping_time(traj: Trajectory, eps0: float | None = None, level: float | None = None) -> float | None:
    """First sample time with |x|^2_{V_eps} >= 3R/2, or None.

    Detection is at sample granularity; the O(dt) bias is documented
    behaviour, not an accident.
    """
    if "veps2" not in traj.ledger:
        raise ValueError("trajectory ledger lacks the 'veps2' entry")
    if eps0 is not None and abs(eps0 - traj.cfg.eps0) > 1e-12:
        raise ValueError(
            f"requested eps0={eps0} but the ledger was recorded with {traj.cfg.eps0}"
        )
    r = traj.cfg.cutoff_r if level is None else level
    hit = np.nonzero(traj.ledger["veps2"] >= 1.5 * r)[0]
    if hit.size == 0:
        return None
    return float(traj.times[hit[0]])


def residual_v(traj_full: Trajectory, traj_stokes: Trajectory) -> Trajectory:
    """Pathwise residual v = xi - z of two same-seed runs, with its own ledger."""
    if traj_full.fields is None or traj_stokes.fields is None:
        raise ValueError("residual requires both trajectories to carry stored fields")
    if traj_full.cfg.seed != traj_stokes.cfg.seed or traj_full.cfg.n_modes != traj_stokes.cfg.n_modes:
        raise ValueError("residual requires aligned runs (same seed and truncation)")
    if traj_full.times.shape != traj_stokes.times.shape or np.any(traj_full.times != traj_stokes.times):
        raise ValueError("residual requires identical sample times")
    cfg = traj_full.cfg
    table = get_table(cfg.n_modes)
    w_v = table.k_sq
    w_eps = table.k_sq ** (2.0 * (0.25 + cfg.eps0))
    vs, h2s, v2s, veps2s = [], [], [], []
    for xf, xz in zip(traj_full.fields, traj_stokes.fields):
        c = xf.coeffs - xz.coeffs
        e = (np.abs(c) ** 2).sum(axis=1)
        vs.append(SpectralField(cfg.n_modes, c))
        h2s.append(2.0 * float(e.sum()))
        v2s.append(2.0 * float((w_v * e).sum()))
        veps2s.append(2.0 * float((w_eps * e).sum()))
    return Trajectory(
        cfg=cfg,
        times=traj_full.times.copy(),
        ledger={"h2": np.array(h2s), "v2": np.array(v2s), "veps2": np.array(veps2s)},
        final_state=vs[-1],
        fields=vs,
    )
