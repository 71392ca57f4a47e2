"""Matplotlib renderings saved next to the delimited report files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .graph import HomophilyReport
from .propagation import LayerwiseHomophily
from .training import EpochReport

_CLASS_STYLE = {0: ("benign", "tab:blue"), 1: ("fraud", "tab:red")}


def save_homophily_histogram(report: HomophilyReport, path) -> Path:
    """Side-by-side per-class histograms of node homophily."""
    fig, ax = plt.subplots(figsize=(6, 4))
    centers = 0.5 * (report.bin_edges[:-1] + report.bin_edges[1:])
    width = report.bin_edges[1] - report.bin_edges[0]
    for c, (label, color) in _CLASS_STYLE.items():
        counts = report.histograms[c]
        offset = (c - 0.5) * 0.4 * width
        ax.bar(centers + offset, counts, width=0.4 * width, label=label, color=color, alpha=0.85)
    ax.set_xlabel("node homophily")
    ax.set_ylabel("nodes")
    ax.set_xlim(-0.05, 1.05)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_layer_curves(lw: LayerwiseHomophily, path) -> Path:
    """Mean fraud homophily per order: mixed ball vs decoupled ring."""
    layers = np.arange(1, lw.layers + 1)
    mixed = [lw.mean_mixed(l) for l in layers]
    decoupled = [lw.mean_decoupled(l) for l in layers]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(layers, mixed, marker="o", label="mixed (<= l hops)")
    ax.plot(layers, decoupled, marker="s", label="decoupled (exactly l hops)")
    ax.set_xlabel("order l")
    ax.set_ylabel("mean fraud homophily")
    ax.set_ylim(-0.05, 1.05)
    ax.set_xticks(layers)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def save_training_curves(reports: list[EpochReport], path) -> Path:
    """Training loss and validation metrics over evaluated epochs."""
    epochs = [r.epoch for r in reports]
    fig, (ax_loss, ax_val) = plt.subplots(1, 2, figsize=(10, 4))
    ax_loss.plot(epochs, [r.loss_mean for r in reports], color="tab:gray")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("train loss (mean)")
    evaluated = [r for r in reports if r.val is not None]
    if evaluated:
        ep = [r.epoch for r in evaluated]
        ax_val.plot(ep, [r.val.auc for r in evaluated], marker="o", label="AUC")
        ax_val.plot(ep, [r.val.f1_macro for r in evaluated], marker="s", label="F1-macro")
        ax_val.plot(ep, [r.val.gmean for r in evaluated], marker="^", label="GMean")
        ax_val.set_ylim(0.0, 1.05)
        ax_val.legend()
    ax_val.set_xlabel("epoch")
    ax_val.set_ylabel("validation metric")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path
