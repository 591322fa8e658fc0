"""Ensemble orchestration, CSV/manifest persistence, reproducibility plumbing.

Trajectories are independent tasks executed on a process pool (capped by the
NSMK_THREADS environment variable); every reduction runs in fixed trajectory
order, so the CSV payload is byte-identical whatever the worker count.
Per-trajectory divergence is recorded and the run continues; only an
ensemble with zero surviving trajectories is an error.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import diagnostics as diag
from . import dynamics as dyn
from . import field as fld
from . import noise as noisemod
from .config import ConfigError, EnsembleSpec, RunConfig, canonical_lines, config_hash
from .diagnostics import ObservableSet
from .field import SpectralField
from .snapshot import load_state_for_run, write_snapshot

__version__ = "0.1.0"


class AllTrajectoriesDivergedError(RuntimeError):
    """Every member of the ensemble diverged; exit code 3 at the CLI."""


@dataclass
class RunManifest:
    config_hash: str
    version: str
    wall_seconds: float
    seeds: list
    files: dict
    divergences: list
    config_echo: list
    extra: dict

    def to_json(self) -> str:
        return json.dumps(self.__dict__, indent=2, sort_keys=True)


def run_ensemble(spec: EnsembleSpec, verb: str, out_dir) -> RunManifest:
    """Dispatch one of the ensemble verbs; energy-check failures surface in
    the returned manifest's extra field."""
    verbs = {
        "simulate": run_simulate,
        "invariant": run_invariant,
        "flux": run_flux,
        "mixing": run_mixing,
        "stopping": run_stopping,
    }
    if verb in verbs:
        return verbs[verb](spec, out_dir)
    if verb == "energy-check":
        manifest, all_ok = run_energy_check(spec, out_dir)
        manifest.extra["energy_check_passed"] = all_ok
        return manifest
    raise ConfigError(f"unknown verb {verb!r}")


def n_workers(n_tasks: int) -> int:
    env = os.environ.get("NSMK_THREADS")
    cap = int(env) if env else (os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def _pmap(func, tasks):
    w = n_workers(len(tasks))
    if w <= 1 or len(tasks) <= 1:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=w) as pool:
        return list(pool.map(func, tasks, chunksize=1))


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_csv(path, comments: list[str], header: list[str], rows):
    with open(path, "w") as fh:
        for line in comments:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) if not isinstance(v, str) else v for v in row) + "\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def finalize_manifest(out_dir, spec: EnsembleSpec, t0: float,
                      divergences: list, extra: dict) -> RunManifest:
    files = {}
    for name in sorted(os.listdir(out_dir)):
        full = os.path.join(out_dir, name)
        if name != "manifest.json" and os.path.isfile(full):
            files[name] = _sha256(full)
    seeds = [
        [i] + [f"{int(w):016x}" for w in noisemod.trajectory_key(spec.cfg.seed, i)]
        for i in range(spec.n_traj)
    ]
    manifest = RunManifest(
        config_hash=config_hash(spec),
        version=__version__,
        wall_seconds=time.time() - t0,
        seeds=seeds,
        files=files,
        divergences=divergences,
        config_echo=canonical_lines(spec),
        extra=extra,
    )
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        fh.write(manifest.to_json() + "\n")
    return manifest


def resolve_initial_state(spec: EnsembleSpec, traj_index: int,
                          cfg: RunConfig | None = None) -> SpectralField | None:
    cfg = cfg or spec.cfg
    text = spec.x0
    if text == "zero":
        return None
    if text.startswith("random:"):
        return dyn.random_x0(cfg, float(text.split(":", 1)[1]), traj_index)
    if text.startswith("snapshot:"):
        return load_state_for_run(text.split(":", 1)[1], cfg.n_modes)
    if text.startswith("list:"):
        paths = [p for p in text.split(":", 1)[1].split(",") if p]
        return load_state_for_run(paths[traj_index % len(paths)], cfg.n_modes)
    raise ConfigError(f"bad x0 spec {text!r}")


# ---------------------------------------------------------------------------
# verb: simulate

def _simulate_task(args):
    spec, i = args
    cfg = spec.cfg
    try:
        traj = dyn.simulate(cfg, resolve_initial_state(spec, i), traj_index=i)
    except dyn.IntegrationDivergedError as exc:
        return i, None, {"trajectory": i, "time": exc.time, "step": exc.step}
    return i, traj, None


def run_simulate(spec: EnsembleSpec, out_dir) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    results = _pmap(_simulate_task, [(spec, i) for i in range(spec.n_traj)])
    divergences = [d for _, _, d in results if d]
    if all(t is None for _, t, _ in results):
        finalize_manifest(out_dir, spec, t0, divergences, {})
        raise AllTrajectoriesDivergedError("all trajectories diverged")
    chash = config_hash(spec)
    header = ["time", "h2", "v2", "veps2"] + [f"theta2:{t:g}" for t in spec.cfg.thetas]
    for i, traj, _ in results:
        if traj is None:
            continue
        name = "ledger.csv" if spec.n_traj == 1 else f"ledger_{i:04d}.csv"
        rows = zip(traj.times, *[traj.ledger[h] for h in header[1:]])
        write_csv(os.path.join(out_dir, name),
                  [f"config_hash={chash}", f"trajectory={i}"], header, rows)
        for t_snap, x_snap in traj.snapshots:
            snap_name = f"snap_{i:04d}_{t_snap:012.6f}.nsmk"
            write_snapshot(os.path.join(out_dir, snap_name), x_snap,
                           spec.cfg.nu, t_snap, spec.cfg.seed)
    return finalize_manifest(out_dir, spec, t0, divergences, {})


# ---------------------------------------------------------------------------
# observable-series ensembles (invariant, flux, mixing share this)

def _series_task(args):
    spec, i, names, cfg = args
    obs = ObservableSet(names, cfg)
    rows = []

    def observer(t, x):
        rows.append(obs.evaluate(x))

    try:
        traj = dyn.simulate(cfg, resolve_initial_state(spec, i, cfg),
                            observer=observer, traj_index=i)
    except dyn.IntegrationDivergedError as exc:
        return i, None, None, {"trajectory": i, "time": exc.time, "step": exc.step}
    return i, traj.times, np.array(rows).T, None


def collect_series(spec: EnsembleSpec, names, cfg: RunConfig | None = None):
    """Run the ensemble and stack observable series: (times, {name: (n_ok, n_t)}, divergences)."""
    cfg = cfg or spec.cfg
    results = _pmap(_series_task, [(spec, i, names, cfg) for i in range(spec.n_traj)])
    divergences = [d for _, _, _, d in results if d]
    ok = [(times, mat) for _, times, mat, d in results if d is None]
    if not ok:
        raise AllTrajectoriesDivergedError("all trajectories diverged")
    times = ok[0][0]
    series = {name: np.stack([mat[j] for _, mat in ok])
              for j, name in enumerate(names)}
    return times, series, divergences


def run_invariant(spec: EnsembleSpec, out_dir) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    names = tuple(dict.fromkeys(("h2", "v2", "veps2") + tuple(spec.observables)))
    times, series, divergences = collect_series(spec, names)
    measure = diag.kb_average(times, series, spec.cfg.burn_in_resolved, spec.cfg)
    chash = config_hash(spec)
    rows = [(name, *measure.row(name)) for name in names]
    rows += [(name, value, float("nan"), float("nan"))
             for name, value in sorted(measure.derived.items())]
    write_csv(os.path.join(out_dir, "measure.csv"),
              [f"config_hash={chash}", f"burn_in={measure.burn_in!r}"],
              ["observable", "mean", "se", "n_eff"], rows)
    return finalize_manifest(out_dir, spec, t0, divergences, {})


def run_flux(spec: EnsembleSpec, out_dir) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    cuts = tuple(spec.k_grid)
    names = ("h2", "v2", "veps2") + tuple(f"flux:{k}" for k in cuts) \
        + tuple(f"gradlow2:{k}" for k in cuts)
    times, series, divergences = collect_series(spec, names)
    measure = diag.kb_average(times, series, spec.cfg.burn_in_resolved, spec.cfg)
    nspec = spec.cfg.noise_spec
    rows = []
    for k in cuts:
        mean_flux, se, _ = measure.row(f"flux:{k}")
        grad_mean = measure.mean(f"gradlow2:{k}")
        expected = 0.5 * (noisemod.trace(nspec, upto=k) - 2.0 * spec.cfg.nu * grad_mean)
        rows.append((k, mean_flux, se, mean_flux - expected))
    write_csv(os.path.join(out_dir, "flux.csv"),
              [f"config_hash={config_hash(spec)}",
               f"burn_in={measure.burn_in!r}",
               f"sigma2={spec.cfg.sigma_sq!r}"],
              ["K", "mean_flux", "se", "balance_residual"], rows)
    return finalize_manifest(out_dir, spec, t0, divergences, {})


def run_mixing(spec: EnsembleSpec, out_dir) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    cfg = spec.cfg
    observable = spec.observables[0] if spec.observables else "h2"
    grid = spec.mixing_times
    if grid is None:
        grid = tuple(np.linspace(0.0, cfg.t_final, 17)[1:])
    t_max = max(grid)

    # stationary reference: one long run on a distinct RNG stream
    ref_cfg = replace(cfg, seed=cfg.seed + 1)
    ref_spec = replace(spec, cfg=ref_cfg, n_traj=1, x0="zero")
    ref_times, ref_series, _ = collect_series(ref_spec, (observable,), ref_cfg)
    ref_measure = diag.kb_average(ref_times, ref_series, cfg.burn_in_resolved, cfg)
    stat_mean, stat_se, _ = ref_measure.row(observable)

    ens_cfg = replace(cfg, t_final=t_max, burn_in=None)
    ens_spec = replace(spec, cfg=ens_cfg)
    times, series, divergences = collect_series(ens_spec, (observable,), ens_cfg)
    mat = series[observable]
    idx = [int(np.argmin(np.abs(times - t))) for t in grid]
    means = mat[:, idx].mean(axis=0)
    ses = mat[:, idx].std(axis=0, ddof=1) / np.sqrt(mat.shape[0]) if mat.shape[0] > 1 \
        else np.zeros(len(idx))
    report = diag.mixing_fit(times[idx], means, ses, stat_mean, stat_se, observable)
    comments = [
        f"config_hash={config_hash(spec)}",
        f"observable={observable}",
        f"stationary_mean={stat_mean!r}",
        f"stationary_se={stat_se!r}",
    ]
    if report.fit_available:
        comments.append(
            f"fit: C={report.c_fit!r}, a={report.a_fit!r}, r2={report.r_squared!r}"
        )
    else:
        comments.append("fit: unavailable")
    write_csv(os.path.join(out_dir, "mixing.csv"), comments,
              ["t", "distance", "se"],
              zip(report.times, report.distance, report.se))
    return finalize_manifest(out_dir, spec, t0, divergences, {})


# ---------------------------------------------------------------------------
# verb: stopping

def _stopping_task(args):
    spec, level, i = args
    cfg = replace(spec.cfg, system="cutoff", cutoff_r=level,
                  t_final=max(spec.delta_grid))
    x0 = resolve_initial_state(spec, i, cfg)
    veps0 = 0.0 if x0 is None else fld.norm_sq_theta(x0, 0.25 + cfg.eps0)
    if veps0 > level / 2.0:
        return i, level, "excluded", None
    try:
        traj = dyn.simulate(cfg, x0, traj_index=i)
    except dyn.IntegrationDivergedError as exc:
        return i, level, None, {"trajectory": i, "level": level,
                                "time": exc.time, "step": exc.step}
    return i, level, dyn.stopping_time(traj, level=level), None


def run_stopping(spec: EnsembleSpec, out_dir) -> RunManifest:
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    tasks = [(spec, level, i) for level in spec.r_grid for i in range(spec.n_traj)]
    results = _pmap(_stopping_task, tasks)
    divergences = [d for _, _, _, d in results if d]
    taus: dict[float, list] = {level: [] for level in spec.r_grid}
    excluded: dict[float, int] = {level: 0 for level in spec.r_grid}
    for _, level, tau, d in results:
        if d is not None:
            # a diverged tamed run certainly crossed the threshold first
            taus[level].append(d["time"])
        elif tau == "excluded":
            excluded[level] += 1
        else:
            taus[level].append(tau)
    rows = diag.stopping_statistics(taus, spec.delta_grid, excluded)
    write_csv(os.path.join(out_dir, "stopping.csv"),
              [f"config_hash={config_hash(spec)}",
               "excluded=" + ",".join(f"{lv}:{excluded[lv]}" for lv in sorted(excluded))],
              ["R", "delta", "p_hat", "se", "n"], rows)
    return finalize_manifest(out_dir, spec, t0, divergences,
                             {"excluded": {str(k): v for k, v in excluded.items()}})


# ---------------------------------------------------------------------------
# verb: energy-check

def _energy_task(args):
    spec, i = args
    cfg = replace(spec.cfg, system="full" if spec.cfg.system == "stokes" else spec.cfg.system,
                  store_fields=True)
    stokes_cfg = replace(cfg, system="stokes")
    x0 = resolve_initial_state(spec, i, cfg)
    try:
        traj_full = dyn.simulate(cfg, x0, traj_index=i)
    except dyn.IntegrationDivergedError as exc:
        return i, None, {"trajectory": i, "time": exc.time, "step": exc.step}
    traj_z = dyn.simulate(stokes_cfg, None, traj_index=i)
    traj_v = dyn.residual_v(traj_full, traj_z)
    sigma_sq = cfg.sigma_sq
    e1 = diag.energy_e1(traj_full, sigma_sq)
    e2 = diag.energy_en(traj_full, 2, sigma_sq)
    g = diag.g_process(traj_v, traj_z, traj_full)
    d_rows = []
    for x in traj_full.fields:
        b_total = diag.nonlinearity_self(x)
        d_rows.append([diag.inertial_regularized(x, a, b_total) for a in spec.a_grid])
    out = {
        "times": traj_full.times,
        "e1": e1, "e2": e2, "g": g,
        "d": np.array(d_rows).T,           # (n_a, n_t)
        "h2": traj_full.ledger["h2"],
        "v2": traj_full.ledger["v2"],
    }
    return i, out, None


def run_energy_check(spec: EnsembleSpec, out_dir, stderr=None) -> tuple[RunManifest, bool]:
    import sys
    stderr = stderr or sys.stderr
    os.makedirs(out_dir, exist_ok=True)
    t0 = time.time()
    results = _pmap(_energy_task, [(spec, i) for i in range(spec.n_traj)])
    divergences = [d for _, _, d in results if d]
    ok = [r for _, r, d in results if d is None]
    if not ok:
        raise AllTrajectoriesDivergedError("all trajectories diverged")
    times = ok[0]["times"]
    cfg = spec.cfg
    sigma_sq = cfg.sigma_sq

    e1 = np.stack([r["e1"] for r in ok])
    e2 = np.stack([r["e2"] for r in ok])
    g = np.stack([r["g"] for r in ok])
    d = np.stack([r["d"] for r in ok])     # (n_ok, n_a, n_t)
    v2 = np.stack([r["v2"] for r in ok])

    start = spec.bump_start if spec.bump_start is not None else 0.25 * cfg.t_final
    width = spec.bump_width if spec.bump_width is not None else 0.5 * cfg.t_final
    bump = diag.Bump(start, width)
    verdicts = []
    for name, mat in (("E1", e1), ("E2", e2), ("G", g)):
        res = diag.supermartingale_smooth_test(times, mat, bump)
        verdicts.append((f"supermartingale[{name}]",
                         f"statistic={res.statistic!r} se={res.se!r}", res.passed))

    d_abs_mean = np.abs(d.mean(axis=(0, 2)))        # per a, averaged over traj and time
    i_small = int(np.argmin(spec.a_grid))
    i_large = int(np.argmax(spec.a_grid))
    denom = float(d_abs_mean[i_large])
    ratio = float(d_abs_mean[i_small]) / denom if denom > 0 else 0.0
    verdicts.append(("inertial_vanishing",
                     f"|D(a={spec.a_grid[i_small]!r})|/|D(a={spec.a_grid[i_large]!r})|={ratio!r}",
                     ratio <= 0.5))

    keep = times >= cfg.burn_in_resolved - 1e-12
    eps_hat = float(v2[:, keep].mean())
    residual = 2.0 * cfg.nu * eps_hat - sigma_sq
    verdicts.append(("stationary_balance",
                     f"2*nu*eps_hat={2.0 * cfg.nu * eps_hat!r} sigma2={sigma_sq!r} "
                     f"residual={residual!r}",
                     abs(residual) <= spec.balance_tol * sigma_sq))

    header = ["t", "E1", "E2", "G"] + [f"D_{a:g}" for a in spec.a_grid]
    rows = zip(times, e1.mean(axis=0), e2.mean(axis=0), g.mean(axis=0),
               *[d[:, j, :].mean(axis=0) for j in range(len(spec.a_grid))])
    write_csv(os.path.join(out_dir, "energy.csv"),
              [f"config_hash={config_hash(spec)}", f"sigma2={sigma_sq!r}"],
              header, rows)

    lines = [f"{name}: {'PASS' if okflag else 'FAIL'} ({detail})"
             for name, detail, okflag in verdicts]
    with open(os.path.join(out_dir, "verdicts.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    for line in lines:
        print(line, file=stderr)
    manifest = finalize_manifest(out_dir, spec, t0, divergences, {})
    return manifest, all(okflag for _, _, okflag in verdicts)
