"""Cross-module invariants: debug validation, discrete mean-energy balance,
entrance probabilities, moment decay, verb dispatch."""

import numpy as np
import pytest
from dataclasses import replace

import nsmk.field as fld
from nsmk.config import ConfigError, EnsembleSpec, RunConfig
from nsmk.diagnostics import entrance_probability
from nsmk.dynamics import simulate
from nsmk.ensemble import run_ensemble
from nsmk.field import norm, random_field, single_mode_field


def test_debug_validator_guards_all_operations(monkeypatch):
    monkeypatch.setattr(fld, "DEBUG_VALIDATE", True)
    x = random_field(3, seed=1)
    from nsmk.bilinear import nonlinearity, nonlinearity_self
    ops = [
        lambda: fld.apply_power(x, 0.7),
        lambda: fld.heat_regularize(x, 0.3),
        lambda: fld.translate(x, (1.0, 2.0, 3.0)),
        lambda: fld.project_modes(x, 1, "high"),
        lambda: nonlinearity(x, x),
        lambda: nonlinearity_self(x),
    ]
    for op in ops:
        fld.validate(op())
    cfg = RunConfig(nu=0.5, n_modes=3, dt=5e-3, t_final=0.05, seed=2, system="full")
    fld.validate(simulate(cfg, x).final_state)


def test_discrete_mean_energy_balance():
    # over a window, the increment of E|x|^2_H matches
    # E[-2 nu |x|^2_V + Tr Q] dt within Monte Carlo error plus an O(dt)
    # discretization allowance (the martingale part dominates the spread)
    cfg = RunConfig(nu=0.5, n_modes=3, dt=2e-3, t_final=1.0, seed=3,
                    system="full", q_exponent=2.0, sample_every=5)
    n_traj = 48
    defect = []
    for i in range(n_traj):
        traj = simulate(cfg, traj_index=i)
        h2, v2, t = traj.ledger["h2"], traj.ledger["v2"], traj.times
        lhs = h2[-1] - h2[0]
        rhs = np.trapezoid(-2.0 * cfg.nu * v2, t) + cfg.sigma_sq * t[-1]
        defect.append(lhs - rhs)
    defect = np.array(defect)
    se = defect.std(ddof=1) / np.sqrt(n_traj)
    assert abs(defect.mean()) <= 3.0 * se + 10.0 * cfg.dt * cfg.sigma_sq


def test_entrance_probability_monte_carlo_positive():
    # weak noise, long horizon: the state ends up inside the moment-bound
    # ball around the origin with positive probability
    cfg = RunConfig(nu=1.0, n_modes=2, dt=5e-3, t_final=8.0, seed=4,
                    system="full", sigma0=0.05, q_exponent=2.0, sample_every=1600)
    finals = []
    for i in range(24):
        traj = simulate(cfg, random_field(2, seed=100 + i, h_norm=1.0), traj_index=i)
        finals.append(traj.ledger["h2"][-1])
    level = cfg.sigma_sq / cfg.nu
    p, se = entrance_probability(np.array(finals), level)
    assert p > 0.0


def test_pathwise_decay_without_noise():
    # sigma ~ 0: |x_t|^2 <= |x0|^2 e^(-2 nu t) pathwise (slowest mode rate)
    cfg = RunConfig(nu=0.8, n_modes=3, dt=2e-3, t_final=1.0, seed=5,
                    system="full", sigma0=1e-300)
    x0 = random_field(3, seed=6, h_norm=2.0)
    traj = simulate(cfg, x0)
    bound = norm(x0) ** 2 * np.exp(-2.0 * cfg.nu * traj.times)
    assert np.all(traj.ledger["h2"] <= bound * (1.0 + 1e-9))


def test_moment_bound_saturates_at_noise_floor():
    # from rest the stationary mean sits below sigma^2 / (2 nu)
    cfg = RunConfig(nu=1.0, n_modes=2, dt=5e-3, t_final=50.0, seed=7,
                    system="full", q_exponent=2.0, sample_every=10)
    traj = simulate(cfg)
    keep = traj.times >= 10.0
    assert traj.ledger["h2"][keep].mean() <= cfg.sigma_sq / (2.0 * cfg.nu)


def test_snapshot_initial_condition_roundtrip(tmp_path):
    from nsmk.ensemble import resolve_initial_state
    from nsmk.snapshot import write_snapshot
    x = random_field(2, seed=11, h_norm=0.7)
    path = tmp_path / "ic.nsmk"
    write_snapshot(path, x, nu=0.5, sim_time=0.0, seed=1)
    cfg = RunConfig(nu=0.5, n_modes=2, dt=0.01, t_final=0.1, seed=1, system="full")
    spec = EnsembleSpec(cfg=cfg, x0=f"snapshot:{path}")
    y = resolve_initial_state(spec, 0)
    assert np.array_equal(y.coeffs, x.coeffs)
    traj = simulate(cfg, y)
    assert traj.ledger["h2"][0] == pytest.approx(norm(x) ** 2, rel=1e-12)


def test_list_initial_conditions_cycle(tmp_path):
    from nsmk.ensemble import resolve_initial_state
    from nsmk.snapshot import write_snapshot
    a = random_field(2, seed=21, h_norm=0.5)
    b = random_field(2, seed=22, h_norm=0.5)
    pa, pb = tmp_path / "a.nsmk", tmp_path / "b.nsmk"
    write_snapshot(pa, a, 0.5, 0.0, 1)
    write_snapshot(pb, b, 0.5, 0.0, 1)
    cfg = RunConfig(nu=0.5, n_modes=2, dt=0.01, t_final=0.1, seed=1, system="full")
    spec = EnsembleSpec(cfg=cfg, n_traj=3, x0=f"list:{pa},{pb}")
    assert np.array_equal(resolve_initial_state(spec, 0).coeffs, a.coeffs)
    assert np.array_equal(resolve_initial_state(spec, 1).coeffs, b.coeffs)
    assert np.array_equal(resolve_initial_state(spec, 2).coeffs, a.coeffs)


def test_run_ensemble_dispatch(tmp_path):
    cfg = RunConfig(nu=0.5, n_modes=2, dt=0.01, t_final=0.3, seed=8,
                    system="full", sample_every=5)
    spec = EnsembleSpec(cfg=cfg, n_traj=1)
    manifest = run_ensemble(spec, "simulate", str(tmp_path / "a"))
    assert "ledger.csv" in manifest.files
    with pytest.raises(ConfigError, match="unknown verb"):
        run_ensemble(spec, "frobnicate", str(tmp_path / "b"))


def test_energy_check_failure_exit_code(tmp_path):
    # an impossible balance tolerance forces a FAIL verdict and exit 4
    from nsmk.cli import main
    cfgp = tmp_path / "e.cfg"
    cfgp.write_text(
        "nu = 0.5\nn_modes = 2\ndt = 0.005\nt_final = 1.0\nburn_in = 0.2\n"
        "seed = 9\nsystem = full\nn_traj = 2\nsample_every = 5\n"
        "balance_tol = 1e-9\nbump_start = 0.2\nbump_width = 0.5\n"
    )
    code = main(["energy-check", "--config", str(cfgp), "--out", str(tmp_path / "out")])
    assert code == 4
    verdicts = (tmp_path / "out" / "verdicts.txt").read_text()
    assert "stationary_balance: FAIL" in verdicts


def test_oracle_verb_rejects_large_truncation(capsys):
    from nsmk.cli import main
    assert main(["oracle-b", "--n-modes", "6"]) == 2
