"""Redraw the two reference figures with matplotlib (not a package dependency).

    nagumo-pb portrait --config configs/portrait.conf
    python docs/plots/figures.py out/portrait

Figure 1: the lines y = g s against y = n F(s) for a few constant n.
Figure 2: phase portrait from the portrait_XX.csv files plus the equilibria.
"""

import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from nagumo_pb import AutonomousSystem, Nonlinearity, build_modified, equilibrium

G = 0.1
F = Nonlinearity.cubic(0.6)


def figure1(ax):
    s = np.linspace(0.0, 1.0, 400)
    for n in (1.0, 2.5, 20.0):
        ax.plot(s, n * F(s), label=f"n = {n:g}")
    ax.plot(s, G * s, "k--", label="y = g s")
    ax.axhline(0.0, color="0.7", lw=0.5)
    ax.set(xlabel="s", ylabel="y", title="Intersections of y = n F(s) with y = g s")
    ax.legend()


def figure2(ax, folder: Path):
    for path in sorted(folder.glob("portrait_*.csv")):
        with open(path) as fh:
            rows = np.array([[float(r["x"]), float(r["y"])] for r in csv.DictReader(fh)])
        ax.plot(rows[:, 0], rows[:, 1], lw=0.8)
    a = equilibrium(AutonomousSystem(G, 20.0, build_modified(F)))
    ax.plot([0.0, a, 1.0], [0.0, 0.0, 0.0], "ko", ms=3)
    ax.set(xlabel="x", ylabel="y", xlim=(-0.1, 1.1), title="Phase portrait, n = 20, g = 0.1")


if __name__ == "__main__":
    folder = Path(sys.argv[1] if len(sys.argv) > 1 else "out/portrait")
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(11, 4.5))
    figure1(a1)
    figure2(a2, folder)
    fig.tight_layout()
    fig.savefig(folder / "figures.png", dpi=150)
