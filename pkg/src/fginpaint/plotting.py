"""Figures written next to the CSV outputs: sample grids, loss curves, metric summaries."""

from __future__ import annotations

import csv
import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GRID_COLUMNS = ("input", "prediction", "composite", "ground truth")


def _style(ax):
    ax.set_xticks([])
    ax.set_yticks([])
    for spine in ax.spines.values():
        spine.set_visible(False)


def save_sample_grid(path, rows, title: str | None = None, dpi: int = 100) -> Path:
    """One row per sample: input | prediction | composite | ground truth.

    ``rows`` is a sequence of 4-tuples of ``(H, W, 3)`` arrays in [0, 1].
    """
    rows = list(rows)
    fig, axes = plt.subplots(len(rows), 4, figsize=(8, 2 * len(rows)), squeeze=False)
    for r, images in enumerate(rows):
        for c, img in enumerate(images):
            ax = axes[r, c]
            ax.imshow(np.clip(img, 0, 1), interpolation="nearest")
            _style(ax)
            if r == 0:
                ax.set_title(GRID_COLUMNS[c], fontsize=9)
    if title:
        fig.suptitle(title, fontsize=10)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=dpi)
    plt.close(fig)
    return path


def plot_loss_csv(csv_path, out_path) -> Path:
    """Per-term generator losses against step, log-scaled where positive."""
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if rows:
        steps = [int(r["step"]) for r in rows]
        for key in ("total", "l_cF", "l_F", "l_pF", "l_adv"):
            vals = np.array([float(r[key]) for r in rows])
            ax.plot(steps, vals, label=key, lw=1.2 if key == "total" else 0.8)
        if all(float(r["total"]) > 0 for r in rows):
            ax.set_yscale("symlog", linthresh=1e-3)
        ax.legend(frameon=False, fontsize=8, ncol=3)
    else:
        ax.text(0.5, 0.5, "no steps logged", ha="center", va="center", transform=ax.transAxes)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path


def plot_metric_reports(reports, out_path) -> Path:
    """Per-image metric distributions, one panel per metric, one box per scope."""
    metrics = ("mse", "mae", "psnr", "ssim")
    fig, axes = plt.subplots(1, 4, figsize=(11, 3))
    for ax, key in zip(axes, metrics):
        data, labels = [], []
        for scope, rep in reports.items():
            vals = [row[key] for row in rep.per_image.values() if math.isfinite(row[key])]
            if vals:
                data.append(vals)
                labels.append(scope)
        if data:
            ax.boxplot(data)
            ax.set_xticks(range(1, len(labels) + 1), labels)
        ax.set_title(key.upper(), fontsize=9)
        ax.spines[["top", "right"]].set_visible(False)
    fig.tight_layout()
    out_path = Path(out_path)
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return out_path
