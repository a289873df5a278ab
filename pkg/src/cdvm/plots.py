"""Figure rendering for benchmark reports.

Each function draws one figure from already-computed report data and
writes it to a file. The Agg backend is forced so rendering works
headless, and the PNG metadata chunk is suppressed so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .bench import SPECTRUM_CLASSES, RemovalCurve, RetentionReport, SpectrumEntry

_SAVE_KWARGS = {"dpi": 150, "metadata": {"Software": None}}


def save_retention_plot(report: RetentionReport, path: str) -> None:
    """Mean accuracy (with one standard deviation) per method and level."""
    fig, ax = plt.subplots(figsize=(6, 4))
    levels = np.array(report.levels)
    for method in report.methods:
        means = np.array([report.mean(method, lv) for lv in report.levels])
        stds = np.array([report.std(method, lv) for lv in report.levels])
        ax.errorbar(levels, means, yerr=stds, marker="o", capsize=3, label=method)
    ax.set_xlabel("retention level")
    ax.set_ylabel("test accuracy")
    ax.invert_xaxis()
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_removal_curve_plot(curves: Mapping[str, RemovalCurve], path: str) -> None:
    """Accuracy versus removal step for one or more removal orders."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, curve in curves.items():
        ax.plot(np.arange(len(curve.accuracies)), curve.accuracies, marker="o", label=name)
    ax.set_xlabel("removal step")
    ax.set_ylabel("test accuracy")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_overlap_heatmap(levels: Sequence[float], matrix: np.ndarray, path: str) -> None:
    """Heatmap of average overlap coefficients between retention levels."""
    fig, ax = plt.subplots(figsize=(5, 4))
    image = ax.imshow(matrix, vmin=0.0, vmax=1.0, cmap="viridis")
    ticks = np.arange(len(levels))
    tick_labels = [f"{lv:.0%}" for lv in levels]
    ax.set_xticks(ticks, tick_labels)
    ax.set_yticks(ticks, tick_labels)
    for a in range(len(levels)):
        for b in range(len(levels)):
            ax.text(b, a, f"{matrix[a, b]:.2f}", ha="center", va="center",
                    color="white", fontsize=7)
    ax.set_xlabel("retention level")
    ax.set_ylabel("retention level")
    fig.colorbar(image, ax=ax, label="overlap coefficient")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_spectrum_plot(entries: Sequence[SpectrumEntry], path: str) -> None:
    """Fraction of instances per selection-frequency band."""
    counts = {label: 0 for label in SPECTRUM_CLASSES}
    for entry in entries:
        counts[entry.label] += 1
    total = max(len(entries), 1)
    fractions = [counts[label] / total for label in SPECTRUM_CLASSES]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.barh(np.arange(len(SPECTRUM_CLASSES)), fractions, color="steelblue")
    ax.set_yticks(np.arange(len(SPECTRUM_CLASSES)), SPECTRUM_CLASSES)
    ax.invert_yaxis()
    ax.set_xlabel("fraction of training instances")
    ax.grid(alpha=0.3, axis="x")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
