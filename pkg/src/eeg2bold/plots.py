"""Static SVG figures for training and evaluation artifacts.

Figures are written with a fixed hash salt and no embedded timestamp so
that identical inputs produce bitwise-identical files.
"""

from __future__ import annotations

import re
from pathlib import Path
from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.figure import Figure

_SVG_SALT = "eeg2bold"

REAL_COLOR = "tab:orange"
PREDICTED_COLOR = "tab:blue"


def _save_svg(fig: Figure, path) -> None:
    # hashsalt pins the generated element ids; Date=None drops the timestamp
    with matplotlib.rc_context({"svg.hashsalt": _SVG_SALT, "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})


def _slug(label: str) -> str:
    s = re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-")
    return s or "roi"


def save_loss_curves(path, report) -> Path:
    """Plot per-epoch mse / corr / composite losses from a TrainReport."""
    path = Path(path)
    fig = Figure(figsize=(7.0, 4.2))
    ax = fig.add_subplot(111)
    epochs = np.arange(1, report.epochs_run + 1)
    ax.plot(epochs, report.mse[: report.epochs_run], label="mse",
            color="tab:green", linewidth=1.2)
    ax.plot(epochs, report.corr[: report.epochs_run], label="corr",
            color="tab:red", linewidth=1.2)
    ax.plot(epochs, report.composite[: report.epochs_run], label="composite",
            color="tab:blue", linewidth=1.4)
    ax.set_xlabel("epoch")
    ax.set_ylabel("training loss")
    ax.set_title("loss curves")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="upper right")
    fig.tight_layout()
    _save_svg(fig, path)
    return path


def save_roi_overlays(out_dir, real: np.ndarray, predicted: np.ndarray,
                      fs_hz: float, labels: Sequence[str]) -> list[Path]:
    """One SVG per ROI: measured series in orange, predicted in blue.

    real/predicted: [n_rois, n_samples], same units.
    """
    real = np.asarray(real)
    predicted = np.asarray(predicted)
    if real.shape != predicted.shape:
        raise ValueError(
            f"real {real.shape} and predicted {predicted.shape} shapes differ")
    if real.shape[0] != len(labels):
        raise ValueError(f"{len(labels)} labels for {real.shape[0]} rois")
    out_dir = Path(out_dir)
    t = np.arange(real.shape[1]) / float(fs_hz)
    paths = []
    for i, label in enumerate(labels):
        fig = Figure(figsize=(9.0, 3.0))
        ax = fig.add_subplot(111)
        ax.plot(t, real[i], color=REAL_COLOR, linewidth=0.9, label="real")
        ax.plot(t, predicted[i], color=PREDICTED_COLOR, linewidth=0.9,
                label="predicted")
        ax.set_xlabel("time (s)")
        ax.set_ylabel("signal (z)")
        ax.set_title(label)
        ax.grid(True, alpha=0.3)
        ax.legend(loc="upper right")
        fig.tight_layout()
        path = out_dir / f"roi_{i:02d}_{_slug(label)}.svg"
        _save_svg(fig, path)
        paths.append(path)
    return paths
