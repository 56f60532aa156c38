"""SVG report figures.  Output is byte-stable for fixed inputs: a fixed hash
salt for element ids and no creation date in the metadata."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
from matplotlib import rcParams  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402

import numpy as np  # noqa: E402

rcParams["svg.hashsalt"] = "localsignal"
rcParams["svg.fonttype"] = "none"

_META = {"Date": None, "Creator": "localsignal"}


def _save(fig: Figure, path) -> None:
    fig.savefig(path, format="svg", metadata=_META)


def _x(ts, grid):
    """Map 1-based positions to labels when the series has numeric labels."""
    labels = getattr(ts, "labels", None)
    if labels is None or labels.dtype == object:
        return np.asarray(grid, float), "position"
    pos = np.asarray(grid, float)
    idx = np.clip(np.round(pos).astype(int) - 1, 0, labels.size - 1)
    return labels[idx] + (pos - np.round(pos)), "label"


def plot_score(zp, threshold: float | None, path, ts=None, title: str = "") -> None:
    """Z_t and Z_t^2 against t, with the detection threshold."""
    fig = Figure(figsize=(7, 5))
    ax1, ax2 = fig.subplots(2, 1, sharex=True)
    x, xl = _x(ts, zp.grid) if ts is not None else (zp.grid, "position")
    ax1.plot(x, zp.z, lw=1, color="C0")
    ax2.plot(x, zp.z**2, lw=1, color="C0")
    if threshold is not None and np.isfinite(threshold):
        for s in (1, -1):
            ax1.axhline(s * threshold, ls="--", lw=0.8, color="C3")
        ax2.axhline(threshold**2, ls="--", lw=0.8, color="C3")
    i = int(np.argmax(np.abs(zp.z)))
    ax1.axvline(x[i], lw=0.6, color="0.5")
    ax1.set_ylabel("Z_t")
    ax2.set_ylabel("Z_t^2")
    ax2.set_xlabel(xl)
    if title:
        ax1.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_segmentation(ts, changes, fitted, path, title: str = "") -> None:
    """Data with the refitted piecewise fit and the detected change locations."""
    fig = Figure(figsize=(7, 3.5))
    ax = fig.subplots()
    u = np.arange(1, ts.m + 1, dtype=float)
    x, xl = _x(ts, u)
    ax.plot(x, ts.values, lw=0.8, color="0.4", marker=".", ms=2)
    if fitted is not None:
        ax.plot(x, fitted, lw=1.5, color="C0")
    cx, _ = _x(ts, np.asarray(changes, float)) if len(changes) else (np.array([]), "")
    for c in cx:
        ax.axvline(c, ls="--", lw=0.8, color="C3")
    ax.set_xlabel(xl)
    ax.set_ylabel(ts.name or "value")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)


def plot_tar(result, path, title: str = "") -> None:
    """TAR score statistic against the threshold value."""
    zp = result.process
    fig = Figure(figsize=(7, 3.5))
    ax = fig.subplots()
    ax.plot(zp.grid, zp.z, lw=1, marker=".", ms=3, color="C0")
    if np.isfinite(result.threshold):
        ax.axhline(result.threshold, ls="--", lw=0.8, color="C3")
        if result.moments.order == 1:
            ax.axhline(-result.threshold, ls="--", lw=0.8, color="C3")
    ax.axvline(result.t_hat, lw=0.6, color="0.5")
    ax.set_xlabel("threshold t")
    ax.set_ylabel("Z_t" if result.moments.order == 1 else "||Z_t||")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    _save(fig, path)
