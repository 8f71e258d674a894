#!/usr/bin/env python3
"""Empirical approximation constant c0 of each observation operator over a range of h."""

import argparse

import numpy as np

from benard_da.field_core import Grid
from benard_da.interpolants import InterpolantKind, c0_profile


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nx", type=int, default=128)
    ap.add_argument("--samples", type=int, default=50)
    ap.add_argument("--h", type=float, nargs="+", default=[0.5, 0.25, 0.125])
    a = ap.parse_args()

    grid = Grid(nx=a.nx, ny=a.nx)
    print("kind," + ",".join(f"h={h:g}" for h in a.h) + ",max,spread")
    for kind in InterpolantKind:
        v = np.array(list(c0_profile(kind, grid, n_samples=a.samples, h_list=a.h).values()))
        print(f"{kind.value}," + ",".join(f"{x:.4f}" for x in v) + f",{v.max():.4f},{np.abs(v / v.mean() - 1).max():.3f}")


if __name__ == "__main__":
    main()
