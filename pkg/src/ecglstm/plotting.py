"""Figures written next to the text outputs (Agg backend, no timestamps)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .core import CLASS_NAMES  # noqa: E402

# PNG metadata normally embeds the matplotlib version; dropping it keeps
# repeated runs byte-identical.
_PNG_META = {"Software": None}


def confusion_figure(cm: np.ndarray, path: str | Path, title: str = "") -> Path:
    """Row-normalized heatmap annotated with the fraction in every cell."""
    cm = np.asarray(cm, dtype=float)
    rows = cm.sum(axis=1, keepdims=True)
    frac = np.divide(cm, rows, out=np.zeros_like(cm), where=rows > 0)
    fig, ax = plt.subplots(figsize=(7, 6), dpi=100)
    im = ax.imshow(frac, vmin=0.0, vmax=1.0, cmap="Blues")
    n = cm.shape[0]
    names = CLASS_NAMES[:n]
    ax.set_xticks(range(n), names, rotation=45, ha="right")
    ax.set_yticks(range(n), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    for i in range(n):
        for j in range(n):
            if frac[i, j] > 0:
                ax.text(j, i, f"{frac[i, j]:.2f}", ha="center", va="center", fontsize=7,
                        color="white" if frac[i, j] > 0.5 else "black")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path


def peaks_figure(x: np.ndarray, peaks, rate: float, path: str | Path, title: str = "") -> Path:
    """One lead with its detected R peaks marked."""
    x = np.asarray(x, dtype=float)
    peaks = np.asarray(peaks, dtype=np.int64)
    t = np.arange(x.size) / rate
    fig, ax = plt.subplots(figsize=(10, 3), dpi=100)
    ax.plot(t, x, lw=0.7, color="black")
    if peaks.size:
        ax.plot(peaks / rate, x[peaks], "o", ms=4, mfc="none", color="tab:red")
    ax.set_xlabel("time (s)")
    ax.set_ylabel("mV")
    ax.set_xlim(t[0], t[-1] if t.size > 1 else 1.0)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, format="png", metadata=_PNG_META)
    plt.close(fig)
    return path
