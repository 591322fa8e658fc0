"""Run configuration: flat INI-style files with five fixed sections.

Sections are [physics], [discretization], [noise], [ensemble] and
[observables]; key names are unique across sections, so a file without
section headers is accepted too.  Unknown keys are rejected.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass, replace

import numpy as np

from .noise import CovarianceSpec, normalized_sigma0, trace


class ConfigError(Exception):
    """Invalid configuration; exit code 2 at the CLI."""


SYSTEMS = ("full", "stokes", "cutoff")

# (section, key) -> parser
_SECTION_OF = {
    "nu": "physics", "eps0": "physics", "cutoff_r": "physics", "system": "physics",
    "n_modes": "discretization", "dt": "discretization", "t_final": "discretization",
    "burn_in": "discretization", "sample_every": "discretization",
    "snapshot_every": "discretization",
    "sigma0": "noise", "q_exponent": "noise", "alpha0": "noise",
    "n_traj": "ensemble", "seed": "ensemble", "x0": "ensemble",
    "observables": "observables", "thetas": "observables", "k_grid": "observables",
    "r_grid": "observables", "delta_grid": "observables",
    "mixing_times": "observables", "lambdas": "observables", "shifts": "observables",
    "a_grid": "observables", "balance_tol": "observables",
    "bump_start": "observables", "bump_width": "observables",
}

_REQUIRED = ("nu", "n_modes", "dt", "t_final", "seed")


@dataclass(frozen=True)
class RunConfig:
    """Physics + discretization of a single trajectory."""

    nu: float
    n_modes: int
    dt: float
    t_final: float
    seed: int
    system: str = "cutoff"
    eps0: float = 0.25
    cutoff_r: float = 1e3
    burn_in: float | None = None
    sample_every: int = 1
    snapshot_every: int = 0
    sigma0: float | None = None   # None: normalized so Tr[Q] = 1
    q_exponent: float = 2.0
    alpha0: float = 0.25
    thetas: tuple[float, ...] = ()
    store_fields: bool = False

    def __post_init__(self):
        if self.nu <= 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")
        if self.n_modes < 1:
            raise ConfigError(f"n_modes must be >= 1, got {self.n_modes}")
        if self.dt <= 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0:
            raise ConfigError(f"t_final must be >= 0, got {self.t_final}")
        if self.system not in SYSTEMS:
            raise ConfigError(f"system must be one of {SYSTEMS}, got {self.system!r}")
        if not 0.0 < self.eps0 <= 0.25:
            raise ConfigError(f"eps0 must lie in (0, 1/4], got {self.eps0}")
        if self.cutoff_r < 1.0:
            raise ConfigError(f"cutoff_r must be >= 1, got {self.cutoff_r}")
        if self.sample_every < 1:
            raise ConfigError(f"sample_every must be >= 1, got {self.sample_every}")
        if self.seed < 0:
            raise ConfigError(f"seed must be a nonnegative integer, got {self.seed}")
        if self.burn_in is not None and self.t_final > 0 and not self.burn_in < self.t_final:
            raise ConfigError(
                f"burn_in must be smaller than t_final, got {self.burn_in} >= {self.t_final}"
            )

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def sigma0_resolved(self) -> float:
        if self.sigma0 is not None:
            return self.sigma0
        return normalized_sigma0(self.q_exponent, self.n_modes)

    @property
    def noise_spec(self) -> CovarianceSpec:
        return CovarianceSpec(
            sigma0=self.sigma0_resolved,
            q_exponent=self.q_exponent,
            alpha0=self.alpha0,
            n_modes=self.n_modes,
        )

    @property
    def sigma_sq(self) -> float:
        return trace(self.noise_spec)

    @property
    def burn_in_resolved(self) -> float:
        if self.burn_in is not None:
            return self.burn_in
        return min(10.0 / (2.0 * self.nu), self.t_final / 2.0)


@dataclass(frozen=True)
class EnsembleSpec:
    """A RunConfig plus ensemble layout and diagnostic grids.

    Trajectory i of the ensemble draws its noise from the key (seed, i); all
    trajectories share the physics.
    """

    cfg: RunConfig
    n_traj: int = 1
    x0: str = "zero"
    observables: tuple[str, ...] = ("h2", "v2", "veps2")
    k_grid: tuple[int, ...] = (1, 2, 4, 6)
    r_grid: tuple[float, ...] = (4.0, 6.0, 8.0)
    delta_grid: tuple[float, ...] = (0.5, 1.0, 2.0)
    mixing_times: tuple[float, ...] | None = None
    lambdas: tuple[float, ...] = (0.5, 1.0)
    shifts: tuple[tuple[float, float, float], ...] = ((np.pi / 3.0, 0.0, 0.0),)
    a_grid: tuple[float, ...] = (0.2, 0.1, 0.05, 0.025)
    balance_tol: float = 0.05
    bump_start: float | None = None
    bump_width: float | None = None

    def __post_init__(self):
        if self.n_traj < 1:
            raise ConfigError(f"n_traj must be >= 1, got {self.n_traj}")
        if self.balance_tol <= 0:
            raise ConfigError(f"balance_tol must be positive, got {self.balance_tol}")
        _parse_x0(self.x0)  # validate the shape of the initial-condition spec


def _parse_x0(text: str):
    if text in ("zero",):
        return ("zero", None)
    if text.startswith("random:"):
        try:
            return ("random", float(text.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad random scale in x0 spec {text!r}")
    if text.startswith("snapshot:"):
        return ("snapshot", text.split(":", 1)[1])
    if text.startswith("list:"):
        paths = [p for p in text.split(":", 1)[1].split(",") if p]
        if not paths:
            raise ConfigError(f"x0 list is empty in {text!r}")
        return ("list", paths)
    raise ConfigError(
        f"x0 must be 'zero', 'random:<scale>', 'snapshot:<path>' or "
        f"'list:<path>,<path>,...', got {text!r}"
    )


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(tok) for tok in text.split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(tok) for tok in text.split())


def _shifts(text: str) -> tuple[tuple[float, float, float], ...]:
    out = []
    for group in text.split(";"):
        group = group.strip()
        if not group:
            continue
        parts = [float(p) for p in group.split(",")]
        if len(parts) != 3:
            raise ConfigError(f"shift must have three components, got {group!r}")
        out.append(tuple(parts))
    return tuple(out)


def load_config(path: str) -> EnsembleSpec:
    """Parse and validate a config file, applying documented defaults."""
    with open(path, "r") as fh:
        text = fh.read()
    parser = configparser.ConfigParser()
    try:
        parser.read_string(text, source=str(path))
    except configparser.MissingSectionHeaderError:
        parser = configparser.ConfigParser()
        try:
            parser.read_string("[config]\n" + text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    flat: dict[str, str] = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            if key not in _SECTION_OF:
                raise ConfigError(f"{path}: unknown key {key!r} in section [{section}]")
            want = _SECTION_OF[key]
            if section not in (want, "config"):
                raise ConfigError(
                    f"{path}: key {key!r} belongs in section [{want}], found in [{section}]"
                )
            if key in flat:
                raise ConfigError(f"{path}: duplicate key {key!r}")
            flat[key] = value.strip()
    missing = [k for k in _REQUIRED if k not in flat]
    if missing:
        raise ConfigError(f"{path}: missing required keys {missing}")
    return spec_from_dict(flat, source=str(path))


def spec_from_dict(flat: dict[str, str], source: str = "<dict>") -> EnsembleSpec:
    def grab(key, conv, default=None):
        if key not in flat:
            return default
        try:
            return conv(flat[key])
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"{source}: bad value for {key!r}: {exc}") from exc

    cfg = RunConfig(
        nu=grab("nu", float),
        n_modes=grab("n_modes", int),
        dt=grab("dt", float),
        t_final=grab("t_final", float),
        seed=grab("seed", int),
        system=grab("system", str, "cutoff"),
        eps0=grab("eps0", float, 0.25),
        cutoff_r=grab("cutoff_r", float, 1e3),
        burn_in=grab("burn_in", float),
        sample_every=grab("sample_every", int, 1),
        snapshot_every=grab("snapshot_every", int, 0),
        sigma0=grab("sigma0", float),
        q_exponent=grab("q_exponent", float, 2.0),
        alpha0=grab("alpha0", float, 0.25),
        thetas=grab("thetas", _floats, ()),
    )
    return EnsembleSpec(
        cfg=cfg,
        n_traj=grab("n_traj", int, 1),
        x0=grab("x0", str, "zero"),
        observables=grab("observables", lambda s: tuple(s.split()), ("h2", "v2", "veps2")),
        k_grid=grab("k_grid", _ints, (1, 2, 4, 6)),
        r_grid=grab("r_grid", _floats, (4.0, 6.0, 8.0)),
        delta_grid=grab("delta_grid", _floats, (0.5, 1.0, 2.0)),
        mixing_times=grab("mixing_times", _floats),
        lambdas=grab("lambdas", _floats, (0.5, 1.0)),
        shifts=grab("shifts", _shifts, ((np.pi / 3.0, 0.0, 0.0),)),
        a_grid=grab("a_grid", _floats, (0.2, 0.1, 0.05, 0.025)),
        balance_tol=grab("balance_tol", float, 0.05),
        bump_start=grab("bump_start", float),
        bump_width=grab("bump_width", float),
    )


def canonical_lines(spec: EnsembleSpec) -> list[str]:
    """Stable serialization used for hashing and the manifest echo."""
    cfg = spec.cfg
    pairs = [
        ("physics.nu", cfg.nu), ("physics.eps0", cfg.eps0),
        ("physics.cutoff_r", cfg.cutoff_r), ("physics.system", cfg.system),
        ("discretization.n_modes", cfg.n_modes), ("discretization.dt", cfg.dt),
        ("discretization.t_final", cfg.t_final),
        ("discretization.burn_in", cfg.burn_in_resolved),
        ("discretization.sample_every", cfg.sample_every),
        ("discretization.snapshot_every", cfg.snapshot_every),
        ("noise.sigma0", cfg.sigma0_resolved), ("noise.q_exponent", cfg.q_exponent),
        ("noise.alpha0", cfg.alpha0),
        ("ensemble.n_traj", spec.n_traj), ("ensemble.seed", cfg.seed),
        ("ensemble.x0", spec.x0),
        ("observables.observables", " ".join(spec.observables)),
        ("observables.thetas", " ".join(repr(t) for t in cfg.thetas)),
        ("observables.k_grid", " ".join(str(k) for k in spec.k_grid)),
        ("observables.r_grid", " ".join(repr(r) for r in spec.r_grid)),
        ("observables.delta_grid", " ".join(repr(d) for d in spec.delta_grid)),
        ("observables.mixing_times",
         "" if spec.mixing_times is None else " ".join(repr(t) for t in spec.mixing_times)),
        ("observables.lambdas", " ".join(repr(x) for x in spec.lambdas)),
        ("observables.shifts", ";".join(",".join(repr(c) for c in s) for s in spec.shifts)),
        ("observables.a_grid", " ".join(repr(a) for a in spec.a_grid)),
        ("observables.balance_tol", spec.balance_tol),
        ("observables.bump_start", spec.bump_start),
        ("observables.bump_width", spec.bump_width),
    ]
    return [f"{k}={v!r}" if not isinstance(v, str) else f"{k}={v}" for k, v in pairs]


def config_hash(spec: EnsembleSpec) -> str:
    digest = hashlib.sha256("\n".join(canonical_lines(spec)).encode()).hexdigest()
    return digest[:12]


def with_overrides(spec: EnsembleSpec, **cfg_updates) -> EnsembleSpec:
    """New spec with RunConfig fields replaced (validation re-runs)."""
    return replace(spec, cfg=replace(spec.cfg, **cfg_updates))
