"""Figures written straight to files (Agg backend, no display needed)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def accuracy_vs_distance(series: dict, path, ylabel: str = "accuracy", title: str = "") -> Path:
    """One line per label; ``series`` maps label -> (distances, values)."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for label, (dist, values) in series.items():
        ax.plot(np.asarray(dist), np.asarray(values), marker="o", markersize=3, label=label)
    ax.set_xlabel("source distance (m)")
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    # fixed metadata keeps reruns byte-identical
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)


def reference_responses(table, path) -> Path:
    """Calibrated mean counts per detector against source angle."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for d in range(table.n_detectors):
        ax.plot(table.calib_angles, table.responses[:, d], label=f"det {d}")
    ax.set_xlabel("source angle (deg)")
    ax.set_ylabel(f"mean counts at {table.calib_distance:g} m")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return Path(path)
