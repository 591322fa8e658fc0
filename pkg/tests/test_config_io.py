"""Config parsing, snapshot format, ensemble plumbing, CLI behaviour."""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from nsmk.cli import main as cli_main
from nsmk.config import (ConfigError, EnsembleSpec, RunConfig, config_hash,
                         load_config, with_overrides)
from nsmk.ensemble import run_invariant, run_simulate
from nsmk.field import random_field
from nsmk.snapshot import (SnapshotFormatError, load_state_for_run,
                           read_snapshot, write_snapshot)

MINIMAL = "nu = 0.1\nn_modes = 8\ndt = 1e-3\nt_final = 10\nseed = 1\n"


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ---------------------------------------------------------------------------
# config parsing

def test_minimal_config_gets_documented_defaults(tmp_path):
    spec = load_config(write(tmp_path, MINIMAL))
    cfg = spec.cfg
    assert (cfg.nu, cfg.n_modes, cfg.dt, cfg.t_final, cfg.seed) == (0.1, 8, 1e-3, 10.0, 1)
    assert cfg.q_exponent == 2.0
    assert cfg.alpha0 == 0.25
    assert cfg.system == "cutoff"
    assert cfg.cutoff_r == 1e3
    assert cfg.eps0 == 0.25
    assert cfg.sigma0 is None  # normalized on demand
    assert cfg.sigma_sq == pytest.approx(1.0, rel=1e-12)


def test_sectioned_config_roundtrip(tmp_path):
    text = """
[physics]
nu = 0.5
system = full
[discretization]
n_modes = 4
dt = 0.002
t_final = 2.0
[noise]
q_exponent = 2.5
[ensemble]
seed = 7
n_traj = 3
x0 = random:1.5
[observables]
observables = h2 v2 shell:1
k_grid = 1 2
"""
    spec = load_config(write(tmp_path, text))
    assert spec.cfg.system == "full"
    assert spec.cfg.q_exponent == 2.5
    assert spec.n_traj == 3
    assert spec.x0 == "random:1.5"
    assert spec.observables == ("h2", "v2", "shell:1")
    assert spec.k_grid == (1, 2)


def test_unknown_key_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown key"):
        load_config(write(tmp_path, MINIMAL + "frobnicate = 3\n"))


def test_key_in_wrong_section_rejected(tmp_path):
    text = "[physics]\nnu = 0.1\ndt = 1e-3\n[discretization]\nn_modes = 2\nt_final = 1\n[ensemble]\nseed = 1\n"
    with pytest.raises(ConfigError, match="belongs in section"):
        load_config(write(tmp_path, text))


def test_zero_dt_rejected(tmp_path):
    with pytest.raises(ConfigError, match="dt"):
        load_config(write(tmp_path, MINIMAL.replace("dt = 1e-3", "dt = 0")))


def test_eps0_range_enforced(tmp_path):
    with pytest.raises(ConfigError, match="eps0"):
        load_config(write(tmp_path, MINIMAL + "eps0 = 0.3\n"))


def test_missing_required_keys(tmp_path):
    with pytest.raises(ConfigError, match="missing required"):
        load_config(write(tmp_path, "nu = 0.1\n"))


def test_burn_in_must_precede_horizon(tmp_path):
    with pytest.raises(ConfigError, match="burn_in"):
        load_config(write(tmp_path, MINIMAL + "burn_in = 20\n"))


def test_bad_x0_spec_rejected(tmp_path):
    with pytest.raises(ConfigError, match="x0"):
        load_config(write(tmp_path, MINIMAL + "x0 = sideways\n"))


def test_parse_error_carries_source(tmp_path):
    path = write(tmp_path, "nu == 0.1\n[[[")
    with pytest.raises(ConfigError, match="run.cfg"):
        load_config(path)


def test_config_hash_stable_and_sensitive(tmp_path):
    a = load_config(write(tmp_path, MINIMAL, "a.cfg"))
    b = load_config(write(tmp_path, MINIMAL + "\n# comment\n", "b.cfg"))
    c = load_config(write(tmp_path, MINIMAL.replace("seed = 1", "seed = 2"), "c.cfg"))
    assert config_hash(a) == config_hash(b)
    assert config_hash(a) != config_hash(c)


def test_burn_in_default_tracks_viscosity():
    cfg = RunConfig(nu=0.1, n_modes=2, dt=0.01, t_final=200.0, seed=1)
    assert cfg.burn_in_resolved == pytest.approx(50.0)
    short = RunConfig(nu=0.1, n_modes=2, dt=0.01, t_final=10.0, seed=1)
    assert short.burn_in_resolved == pytest.approx(5.0)


# ---------------------------------------------------------------------------
# snapshots

def test_snapshot_roundtrip_bit_exact(tmp_path):
    x = random_field(3, seed=9, h_norm=2.0)
    path = tmp_path / "state.nsmk"
    write_snapshot(path, x, nu=0.25, sim_time=1.5, seed=77)
    y, meta = read_snapshot(path)
    assert np.array_equal(x.coeffs, y.coeffs)
    assert (meta.n_modes, meta.nu, meta.sim_time, meta.seed) == (3, 0.25, 1.5, 77)


def test_snapshot_bad_magic(tmp_path):
    path = tmp_path / "bad.nsmk"
    x = random_field(2, seed=1)
    write_snapshot(path, x, 0.1, 0.0, 1)
    raw = bytearray(path.read_bytes())
    raw[:5] = b"WRONG"
    path.write_bytes(bytes(raw))
    with pytest.raises(SnapshotFormatError, match="magic"):
        read_snapshot(path)


def test_snapshot_truncated_payload(tmp_path):
    path = tmp_path / "short.nsmk"
    x = random_field(2, seed=2)
    write_snapshot(path, x, 0.1, 0.0, 1)
    raw = path.read_bytes()
    path.write_bytes(raw[:-16])
    with pytest.raises(SnapshotFormatError, match="payload"):
        read_snapshot(path)


def test_snapshot_truncation_mismatch(tmp_path):
    path = tmp_path / "n2.nsmk"
    write_snapshot(path, random_field(2, seed=3), 0.1, 0.0, 1)
    with pytest.raises(SnapshotFormatError, match="does not match run"):
        load_state_for_run(path, 3)


# ---------------------------------------------------------------------------
# ensemble runs and manifests

def small_spec(**kw):
    cfg_kw = dict(nu=0.5, n_modes=2, dt=0.01, t_final=0.5, seed=3,
                  system="full", sample_every=5)
    cfg_kw.update(kw.pop("cfg_kw", {}))
    return EnsembleSpec(cfg=RunConfig(**cfg_kw), **kw)


def test_simulate_writes_ledger_and_manifest(tmp_path):
    out = tmp_path / "run"
    manifest = run_simulate(small_spec(), str(out))
    names = sorted(os.listdir(out))
    assert "ledger.csv" in names
    assert "manifest.json" in names
    # manifest lists every file except itself
    assert set(manifest.files) == set(names) - {"manifest.json"}
    lines = (out / "ledger.csv").read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[2].split(",")[0] == "time"
    assert lines[3].split(",")[0] == "0.0"


def test_single_trajectory_matches_direct_simulate(tmp_path):
    from nsmk.dynamics import simulate
    spec = small_spec()
    run_simulate(spec, str(tmp_path / "o"))
    traj = simulate(spec.cfg)
    rows = (tmp_path / "o" / "ledger.csv").read_text().splitlines()[3:]
    got_h2 = np.array([float(r.split(",")[1]) for r in rows])
    assert np.array_equal(got_h2, traj.ledger["h2"])


def test_rerun_produces_identical_checksums(tmp_path):
    m1 = run_simulate(small_spec(n_traj=2), str(tmp_path / "a"))
    m2 = run_simulate(small_spec(n_traj=2), str(tmp_path / "b"))
    assert m1.files == m2.files
    assert m1.config_hash == m2.config_hash


def test_worker_count_does_not_change_outputs(tmp_path, monkeypatch):
    spec = small_spec(n_traj=6)
    monkeypatch.setenv("NSMK_THREADS", "1")
    m1 = run_simulate(spec, str(tmp_path / "w1"))
    monkeypatch.setenv("NSMK_THREADS", "8")
    m8 = run_simulate(spec, str(tmp_path / "w8"))
    assert m1.files == m8.files
    for name in m1.files:
        a = (tmp_path / "w1" / name).read_bytes()
        b = (tmp_path / "w8" / name).read_bytes()
        assert a == b


def test_snapshots_roundtrip_through_run(tmp_path):
    spec = small_spec(cfg_kw=dict(snapshot_every=25))
    out = tmp_path / "snaps"
    run_simulate(spec, str(out))
    snaps = sorted(p for p in os.listdir(out) if p.endswith(".nsmk"))
    assert len(snaps) == 3  # steps 0, 25, 50
    x, meta = read_snapshot(out / snaps[-1])
    from nsmk.dynamics import simulate
    traj = simulate(spec.cfg)
    assert np.array_equal(x.coeffs, traj.final_state.coeffs)


def test_divergent_trajectories_recorded_not_fatal(tmp_path):
    # blow up one run hard; ensemble continues and the manifest records it
    cfg = RunConfig(nu=1e-8, n_modes=2, dt=5.0, t_final=50.0, seed=1,
                    system="full", sigma0=1e3, q_exponent=0.0)
    spec = EnsembleSpec(cfg=cfg, n_traj=2, x0="random:50")
    out = tmp_path / "div"
    try:
        manifest = run_simulate(spec, str(out))
        assert manifest.divergences  # at least recorded
    except Exception as exc:
        # all-diverged is the only acceptable error here
        from nsmk.ensemble import AllTrajectoriesDivergedError
        assert isinstance(exc, AllTrajectoriesDivergedError)


def test_invariant_verb_writes_measure(tmp_path):
    spec = small_spec(n_traj=2, observables=("h2", "v2", "veps2", "shell:1"),
                      cfg_kw=dict(t_final=2.0, burn_in=0.5))
    out = tmp_path / "inv"
    run_invariant(spec, str(out))
    text = (out / "measure.csv").read_text().splitlines()
    header = text[2].split(",")
    assert header == ["observable", "mean", "se", "n_eff"]
    names = [line.split(",")[0] for line in text[3:]]
    assert "shell:1" in names and "eps_hat" in names and "balance_residual" in names


# ---------------------------------------------------------------------------
# CLI surface

def run_cli(args):
    return cli_main(args)


def test_cli_config_error_exit_code(tmp_path):
    bad = write(tmp_path, "nu = 0.1\n")
    assert run_cli(["simulate", "--config", bad, "--out", str(tmp_path / "x")]) == 2
    assert run_cli(["simulate", "--config", str(tmp_path / "nope.cfg"),
                    "--out", str(tmp_path / "x")]) == 2


def test_cli_simulate_and_check_assumptions(tmp_path, capsys):
    cfgp = write(tmp_path, "nu = 0.5\nn_modes = 2\ndt = 0.01\nt_final = 0.2\nseed = 4\n")
    assert run_cli(["check-assumptions", "--config", cfgp]) == 0
    out = capsys.readouterr().out
    assert "A1" in out and "yes" in out
    assert run_cli(["simulate", "--config", cfgp, "--system", "stokes",
                    "--out", str(tmp_path / "sim")]) == 0
    assert (tmp_path / "sim" / "ledger.csv").exists()


def test_cli_all_diverged_exit_code(tmp_path):
    text = ("nu = 1e-8\nn_modes = 2\ndt = 5.0\nt_final = 50\nseed = 1\n"
            "system = full\nsigma0 = 1000\nq_exponent = 0\nx0 = random:100\nn_traj = 1\n")
    cfgp = write(tmp_path, text)
    assert run_cli(["simulate", "--config", cfgp, "--out", str(tmp_path / "div")]) == 3


def test_cli_oracle_verb(capsys):
    assert run_cli(["oracle-b", "--n-modes", "2", "--trials", "3"]) == 0
    assert "PASS" in capsys.readouterr().out


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "nsmk.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout
