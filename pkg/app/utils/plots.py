"""
Static plot files (loss curves, precision-recall curves, ablation bars).
"""

import os
from typing import Dict, Mapping, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from app.utils.file_utils import ensure_dir  # noqa: E402


def _save(fig, path: str) -> str:
    ensure_dir(os.path.dirname(os.path.abspath(path)))
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_loss_curve(curves: Mapping[str, Sequence[float]], path: str, title: str = "Training loss") -> str:
    """One line per named loss component."""
    f, ax = plt.subplots(figsize=(7, 4))
    for name, values in curves.items():
        ax.plot(np.arange(1, len(values) + 1), values, label=name, linewidth=1)
    ax.set_xlabel("iteration")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend()
    return _save(f, path)


def plot_pr_curves(curves: Dict[str, Tuple[np.ndarray, np.ndarray]], path: str) -> str:
    f, ax = plt.subplots(figsize=(6, 6))
    for track, (recall, precision) in curves.items():
        ax.step(np.r_[0.0, recall], np.r_[1.0 if len(precision) else 0.0, precision], where="post", label=track)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.05)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.legend(fontsize="small")
    return _save(f, path)


def plot_bars(values: Mapping[str, Sequence[float]], labels: Sequence[str], path: str, ylabel: str) -> str:
    """Grouped bars: one group per label, one bar per series."""
    f, ax = plt.subplots(figsize=(max(6, 1.2 * len(labels)), 4))
    width = 0.8 / max(len(values), 1)
    x = np.arange(len(labels))
    for i, (series, heights) in enumerate(values.items()):
        ax.bar(x + i * width, heights, width=width, label=series)
    ax.set_xticks(x + width * (len(values) - 1) / 2)
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")
    return _save(f, path)
