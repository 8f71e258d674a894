#!/usr/bin/env python3
"""Decay rate against nudging gain and observation resolution, from one shared spin-up.

    python scripts/sweep_mu.py --nx 64 --spinup-T 30 --run-T 20 --mu 25 50 100 --h 0.04 0.08 0.16
"""

import argparse
import sys

from benard_da.field_core import Grid
from benard_da.interpolants import InterpolantKind, InterpolantSpec, estimate_c0
from benard_da.runner import DAConfig, spin_up, sweep, sweep_to_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=64)
    ap.add_argument("--spinup-T", type=float, default=30.0)
    ap.add_argument("--run-T", type=float, default=20.0)
    ap.add_argument("--mu", type=float, nargs="+", default=[25.0, 50.0, 100.0, 200.0])
    ap.add_argument("--h", type=float, nargs="+", default=[0.04, 0.08, 0.16])
    ap.add_argument("--kind", choices=[k.value for k in InterpolantKind], default="FourierModes")
    ap.add_argument("--parallelism", type=int, default=1)
    ap.add_argument("--out", help="directory for per-cell sync.csv files")
    a = ap.parse_args()

    cfg = DAConfig(grid=Grid(nx=a.nx, ny=a.nx), spec=InterpolantSpec(a.kind), spinup_T=a.spinup_T, run_T=a.run_T, mu=max(a.mu))
    ref0 = spin_up(cfg).state
    c0 = estimate_c0(cfg.spec.kind, cfg.grid, n_samples=20)
    rows = sweep(cfg, a.mu, a.h, parallelism=a.parallelism, c0=c0, ref0=ref0, out_dir=a.out)
    sys.stdout.write(sweep_to_csv(rows))


if __name__ == "__main__":
    main()
