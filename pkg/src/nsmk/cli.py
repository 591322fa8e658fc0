"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical divergence of the
whole ensemble, 4 failed verdict in energy-check.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

import numpy as np

from . import ensemble as ens
from .config import ConfigError, load_config
from .noise import check_assumptions


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsmk",
        description="Spectral simulator and diagnostics for stochastically "
                    "forced incompressible flow on the periodic box",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    def with_config(p, out=True):
        p.add_argument("--config", required=True, help="path to the run config")
        if out:
            p.add_argument("--out", required=True, help="output directory")
        return p

    p = with_config(sub.add_parser("check-assumptions",
                                   help="print the noise regularity ladder"), out=False)

    p = with_config(sub.add_parser("simulate", help="integrate trajectories"))
    p.add_argument("--system", choices=("full", "stokes", "cutoff"))
    p.add_argument("--x0", help="zero | random:<scale> | snapshot:<path>")

    with_config(sub.add_parser("invariant", help="long-time observable averages"))
    with_config(sub.add_parser("flux", help="energy-flux profile and per-level balance"))
    with_config(sub.add_parser("mixing", help="relaxation distance and exponential fit"))
    with_config(sub.add_parser("stopping", help="threshold-crossing probability table"))
    with_config(sub.add_parser("energy-check", help="energy-process verdicts"))

    p = sub.add_parser("oracle-b", help="cross-check the convective term "
                                        "against the brute-force convolution")
    p.add_argument("--n-modes", type=int, default=4)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _oracle_b(args) -> int:
    from .bilinear import nonlinearity, nonlinearity_oracle
    from .field import random_field
    if args.n_modes > 4:
        print("oracle-b is quadratic in the mode count; use --n-modes <= 4",
              file=sys.stderr)
        return 2
    worst = 0.0
    for trial in range(args.trials):
        u = random_field(args.n_modes, seed=args.seed * 1000 + 2 * trial)
        v = random_field(args.n_modes, seed=args.seed * 1000 + 2 * trial + 1)
        got = nonlinearity(u, v).coeffs
        want = nonlinearity_oracle(u, v).coeffs
        scale = float(np.abs(want).max()) or 1.0
        worst = max(worst, float(np.abs(got - want).max()) / scale)
    print(f"max relative deviation over {args.trials} trials "
          f"at N={args.n_modes}: {worst:.3e}")
    ok = worst <= 1e-12
    print("PASS" if ok else "FAIL")
    return 0 if ok else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.verb == "oracle-b":
        return _oracle_b(args)
    try:
        spec = load_config(args.config)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.verb == "check-assumptions":
            report = check_assumptions(spec.cfg.noise_spec)
            print(f"{'condition':44s}  holds")
            for name, holds in report.rows():
                print(f"{name:44s}  {'yes' if holds else 'no'}")
            print(f"symbol sup={report.sup_symbol:.6g} inf={report.inf_symbol:.6g} "
                  f"implied alpha0={report.alpha0_implied:.6g}")
            return 0
        if args.verb == "simulate":
            cfg = spec.cfg
            if args.system:
                cfg = replace(cfg, system=args.system)
            spec = replace(spec, cfg=cfg, x0=args.x0 or spec.x0)
            ens.run_simulate(spec, args.out)
            return 0
        if args.verb == "invariant":
            ens.run_invariant(spec, args.out)
            return 0
        if args.verb == "flux":
            ens.run_flux(spec, args.out)
            return 0
        if args.verb == "mixing":
            ens.run_mixing(spec, args.out)
            return 0
        if args.verb == "stopping":
            ens.run_stopping(spec, args.out)
            return 0
        if args.verb == "energy-check":
            _, all_ok = ens.run_energy_check(spec, args.out)
            return 0 if all_ok else 4
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ens.AllTrajectoriesDivergedError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return 3
    raise AssertionError(f"unhandled verb {args.verb}")


if __name__ == "__main__":
    raise SystemExit(main())
