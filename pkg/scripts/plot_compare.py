#!/usr/bin/env python3
"""Render compare.csv (from `nesc compare`) into the two standard figures:
state trajectories of all agents, and the first agent's input.

Usage: python scripts/plot_compare.py out/compare.csv [figures_dir]
"""

import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np


def main():
    if len(sys.argv) < 2:
        print(__doc__)
        return 1
    csv_path = Path(sys.argv[1])
    out_dir = Path(sys.argv[2]) if len(sys.argv) > 2 else csv_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)

    with open(csv_path) as fh:
        header = fh.readline().strip().split(",")
    data = np.genfromtxt(csv_path, delimiter=",", skip_header=1)
    col = {name: data[:, j] for j, name in enumerate(header)}
    t = col["t"]
    n = sum(1 for name in header if name.startswith("x_") and name.endswith("_inesc"))

    fig, axes = plt.subplots(n, 1, sharex=True, figsize=(7, 2.2 * n))
    axes = np.atleast_1d(axes)
    for i, ax in enumerate(axes, start=1):
        ax.plot(t, col[f"x_{i}_inesc"], "b-", lw=1.0, label="I-NESC")
        ax.plot(t, col[f"x_{i}_baseline"], "r:", lw=1.0, label="baseline")
        ax.set_ylabel(f"$x_{i}$")
        ax.grid(alpha=0.3)
    axes[0].legend(loc="lower right")
    axes[-1].set_xlabel("t [s]")
    fig.tight_layout()
    fig.savefig(out_dir / "states.png", dpi=150)

    fig2, ax = plt.subplots(figsize=(7, 3))
    ax.plot(t, col["u_1_inesc"], "b-", lw=0.8, label="I-NESC")
    ax.plot(t, col["u_1_baseline"], "r:", lw=0.8, label="baseline")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("$u_1$")
    ax.grid(alpha=0.3)
    ax.legend(loc="lower right")
    fig2.tight_layout()
    fig2.savefig(out_dir / "input_agent1.png", dpi=150)
    print(f"wrote {out_dir / 'states.png'} and {out_dir / 'input_agent1.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
