#!/usr/bin/env python3
"""Generate the CSV/run-dir fixtures consumed by the figure-kit tests.

Runs the production CLI verbs at desk scale and copies the outputs into
frontend/fixtures/.  Deterministic: same seeds, same bytes.
"""

import pathlib
import shutil
import sys

from nsmk.cli import main
from nsmk.noise import normalized_sigma0

HERE = pathlib.Path(__file__).resolve().parent
FIXTURES = HERE.parent / "frontend" / "fixtures"

INVARIANT = """
nu = 0.5
system = full
n_modes = 4
dt = 0.0025
t_final = 50
burn_in = 10
sample_every = 20
seed = 12
n_traj = 2
observables = h2 v2 veps2 shell:1 shell:2 shell:3 shell:4 shell:5 shell:6 flux:1 flux:2 flux:3
k_grid = 1 2 3
"""

MIXING = """
nu = 0.5
system = full
n_modes = 4
dt = 0.0025
t_final = 40
burn_in = 8
sample_every = 20
seed = 12
n_traj = 16
x0 = random:3.0
observables = h2
mixing_times = 0.25 0.5 0.75 1 1.25 1.5 2 2.5 3 4 5 6
"""

STOPPING = """
nu = 0.1
system = cutoff
n_modes = 4
dt = 0.002
t_final = 1
sigma0 = {sigma0}
seed = 12
n_traj = 32
r_grid = 3 4.5 6
delta_grid = 0.25 0.5 1.0
"""

ENERGY = """
nu = 0.5
system = full
n_modes = 4
dt = 0.001
t_final = 4
burn_in = 1
sample_every = 20
seed = 12
n_traj = 32
balance_tol = 0.3
bump_start = 1.0
bump_width = 2.0
"""


def run(verb, cfg_text, name):
    FIXTURES.mkdir(parents=True, exist_ok=True)
    cfg = FIXTURES / f"{name}.cfg"
    cfg.write_text(cfg_text.strip() + "\n")
    out = FIXTURES / name
    if out.exists():
        shutil.rmtree(out)
    code = main([verb, "--config", str(cfg), "--out", str(out)])
    print(f"{verb} -> {out} (exit {code})")
    if code not in (0, 4):
        sys.exit(code)


STOKES = """
nu = 1.0
system = stokes
n_modes = 2
dt = 0.01
t_final = 120
burn_in = 15
sample_every = 10
seed = 12
observables = h2 v2 veps2
"""


if __name__ == "__main__":
    run("invariant", INVARIANT, "invariant")
    run("flux", INVARIANT, "flux")
    run("mixing", MIXING, "mixing")
    run("stopping", STOPPING.format(sigma0=2.0 * normalized_sigma0(2.0, 4)), "stopping")
    run("energy-check", ENERGY, "energy")
    run("invariant", STOKES, "stokes")
    print("fixtures written to", FIXTURES)
