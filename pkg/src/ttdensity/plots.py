"""Figure rendering for the CLI report paths.

Figures are always written to files next to the delimited output; nothing
here opens a window.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_grid_heatmap(xs, ys, values, path, dims=(1, 2)):
    """Density heatmap over a 2D grid; ``values`` indexed ``[y, x]``."""
    fig, ax = plt.subplots(figsize=(5.4, 4.4))
    mesh = ax.pcolormesh(xs, ys, values, shading="nearest", cmap="viridis")
    fig.colorbar(mesh, ax=ax, label="density")
    ax.set_xlabel(f"x{dims[0]}")
    ax.set_ylabel(f"x{dims[1]}")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def render_training_curves(log_rows, path):
    """Train/validation loss against iteration."""
    iters = [row.iteration for row in log_rows]
    fig, ax = plt.subplots(figsize=(5.4, 3.6))
    ax.plot(iters, [row.train_loss for row in log_rows], label="train", lw=1.2)
    ax.plot(iters, [row.val_loss for row in log_rows], label="validation", lw=1.2)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.legend(frameon=False)
    finite = [v for row in log_rows for v in (row.train_loss, row.val_loss)
              if np.isfinite(v)]
    if finite and min(finite) > 0:
        ax.set_yscale("log")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
