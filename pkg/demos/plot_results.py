"""Figures from CLI output directories (needs matplotlib).

    python demos/plot_results.py RUN_DIR [MULTIRUN_DIR]

Draws cost versus iteration, the mean trace, the final trajectory and, when
a multirun directory is given, the histogram of final costs.
"""

import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def read(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], np.array(rows[1:], dtype=float)


def main(run_dir, multirun_dir=None):
    run_dir = Path(run_dir)
    head, conv = read(run_dir / "convergence.csv")
    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    k = conv[:, head.index("k")]
    axes[0].semilogy(k, conv[:, head.index("best_J")], label="best J")
    axes[0].semilogy(k, conv[:, head.index("gamma")], label="gamma")
    axes[0].set_xlabel("iteration")
    axes[0].legend()
    mhead, mu = read(run_dir / "mu_trace.csv")
    axes[1].plot(mu[:, 0], mu[:, 1:])
    axes[1].set_xlabel("iteration")
    axes[1].set_title("mean of the sampling distribution")
    if (run_dir / "trajectory.csv").exists():
        thead, traj = read(run_dir / "trajectory.csv")
        axes[2].plot(traj[:, 1], traj[:, 2])
        axes[2].set_xlabel(thead[1])
        axes[2].set_ylabel(thead[2])
        axes[2].set_title("final trajectory")
    fig.tight_layout()
    fig.savefig(run_dir / "summary.png", dpi=120)
    if multirun_dir:
        hhead, hist = read(Path(multirun_dir) / "histogram.csv")
        fig, ax = plt.subplots()
        ax.bar(hist[:, 0], hist[:, 2], width=hist[:, 1] - hist[:, 0], align="edge")
        ax.set_xlabel("final cost")
        ax.set_ylabel("runs")
        fig.savefig(Path(multirun_dir) / "histogram.png", dpi=120)


if __name__ == "__main__":
    main(*sys.argv[1:3])
