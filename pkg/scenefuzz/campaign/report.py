"""Counts-vs-simulations curves: CSV export and a matplotlib figure."""

from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure

from ..constants import PALETTE

logger = logging.getLogger(__name__)


def _padded(curves: Sequence[np.ndarray]) -> np.ndarray:
    # shorter repetitions are held at their final value
    curves = [np.asarray(c, dtype=float) for c in curves if len(c)]
    if not curves:
        return np.empty((0, 0))
    length = max(len(c) for c in curves)
    return np.array([np.pad(c, (0, length - len(c)), mode="edge") for c in curves])


def mean_curve(curves: Sequence[np.ndarray]) -> np.ndarray:
    """Average of per-repetition curves."""
    padded = _padded(curves)
    return padded.mean(axis=0) if padded.size else np.empty(0)


def write_curves_csv(curves: dict[str, Sequence[np.ndarray]], path: str | Path) -> Path:
    """One row per (method, simulations) with mean, min and max over repetitions."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["method", "simulations", "mean", "min", "max"])
        for method, reps in curves.items():
            padded = _padded(reps)
            for i in range(padded.shape[1]):
                col = padded[:, i]
                mean, low, high = round(float(col.mean()), 6), float(col.min()), float(col.max())
                writer.writerow([method, i + 1, mean, low, high])
    logger.info("curves written to %s", path)
    return path


def plot_curves(curves: dict[str, Sequence[np.ndarray]], path: str | Path) -> str:
    """Mean unique violations against simulations per method; returns the PNG path."""
    fig = Figure(figsize=(7, 4.5))
    ax = fig.subplots()
    for i, (method, reps) in enumerate(curves.items()):
        mean = mean_curve(reps)
        if mean.size == 0:
            continue
        ax.plot(np.arange(1, mean.size + 1), mean, color=PALETTE[i % len(PALETTE)], label=method)
    ax.set_xlabel("# simulations")
    ax.set_ylabel("# unique violations")
    ax.grid(alpha=0.3)
    ax.legend(loc="upper left")
    fig.tight_layout()

    out = str(path)
    Path(out).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=120)
    return out
