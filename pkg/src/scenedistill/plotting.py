"""Colorized visualizations and report figures.

Colorizers return float RGB images in [0, 1]. Figures are written with the
non-interactive Agg backend and without metadata, so repeated runs produce
identical files.
"""
from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib import colormaps  # noqa: E402
from matplotlib.colors import hsv_to_rgb  # noqa: E402

from .core import DepthMap, FlowField, ScalarMap, as_mask  # noqa: E402
from .dataio import atomic_write_bytes  # noqa: E402

DEPTH_CMAP = "magma"
PROB_CMAP = "inferno"

plt.rcParams.update({
    "font.size": 8,
    "axes.titlesize": 8,
    "axes.labelsize": 8,
    "xtick.labelsize": 7,
    "ytick.labelsize": 7,
    "figure.dpi": 100,
    "savefig.bbox": "tight",
})


def colorize_flow(f: FlowField, max_norm: float | None = None) -> np.ndarray:
    """HSV wheel: hue = direction, saturation = magnitude / 95th percentile.

    Invalid pixels are black. Zero flow is white.
    """
    mag = np.hypot(f.u, f.v)
    if max_norm is None:
        vals = mag[f.valid]
        max_norm = float(np.percentile(vals, 95)) if vals.size else 0.0
    hue = (np.arctan2(-f.v, -f.u) / np.pi + 1.0) / 2.0
    sat = np.clip(mag / max_norm, 0.0, 1.0) if max_norm > 0 else np.zeros_like(mag)
    rgb = hsv_to_rgb(np.stack([hue, sat, np.ones_like(mag)], axis=-1))
    return np.where(f.valid[..., None], rgb, 0.0)


def colorize_depth(d: DepthMap) -> np.ndarray:
    """Inverse depth scaled to its 95th percentile through a fixed colormap."""
    inv = np.where(d.valid, 1.0 / np.where(d.valid, d.values, 1.0), 0.0)
    vals = inv[d.valid]
    top = float(np.percentile(vals, 95)) if vals.size else 1.0
    rgb = colormaps[DEPTH_CMAP](np.clip(inv / top, 0.0, 1.0))[..., :3]
    return np.where(d.valid[..., None], rgb, 0.0)


def colorize_prob(p) -> np.ndarray:
    """Probabilities through a fixed colormap: 0 and 1 hit its endpoints."""
    values = p.values if isinstance(p, ScalarMap) else np.asarray(p, dtype=np.float64)
    return colormaps[PROB_CMAP](np.clip(values, 0.0, 1.0))[..., :3].astype(np.float64)


def colorize_mask(m) -> np.ndarray:
    m = as_mask(m).astype(np.float64)
    return np.repeat(m[..., None], 3, axis=2)


def colorize(x) -> np.ndarray:
    """Dispatch on the raster type."""
    if isinstance(x, FlowField):
        return colorize_flow(x)
    if isinstance(x, DepthMap):
        return colorize_depth(x)
    if isinstance(x, ScalarMap):
        return colorize_prob(x)
    return colorize_mask(x)


def save_figure(fig, path) -> None:
    buf = io.BytesIO()
    fig.savefig(buf, format="png", metadata={"Software": None})
    plt.close(fig)
    atomic_write_bytes(path, buf.getvalue())


def panel_figure(panels, path, ncols: int = 4) -> None:
    """Grid of titled image panels (``[(title, rgb), ...]``)."""
    n = len(panels)
    nrows = max(1, -(-n // ncols))
    fig, axes = plt.subplots(nrows, ncols, figsize=(2.2 * ncols, 1.8 * nrows), squeeze=False)
    for ax in axes.ravel():
        ax.axis("off")
    for ax, (title, rgb) in zip(axes.ravel(), panels):
        ax.imshow(np.clip(rgb, 0, 1), interpolation="nearest")
        ax.set_title(title)
    save_figure(fig, path)


def loss_history_figure(history, path, title="refinement") -> None:
    fig, ax = plt.subplots(figsize=(4, 2.6))
    ax.plot(np.arange(len(history)), history, lw=1)
    ax.set_yscale("log")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    save_figure(fig, path)


def confusion_figure(conf, labels, path, title="confusion") -> None:
    conf = np.asarray(conf, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(3, 3))
    ax.imshow(conf, cmap="Blues")
    ax.set_xticks(range(conf.shape[1]), labels[: conf.shape[1]], rotation=45)
    ax.set_yticks(range(conf.shape[0]), labels[: conf.shape[0]])
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    for (i, j), v in np.ndenumerate(conf):
        ax.text(j, i, f"{int(v)}", ha="center", va="center", fontsize=6)
    ax.set_title(title)
    save_figure(fig, path)


def error_histogram_figure(errors, path, title="endpoint error", xlabel="px") -> None:
    errors = np.asarray(errors, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(4, 2.6))
    ax.hist(errors, bins=50, color="0.3")
    ax.axvline(3.0, color="C3", lw=0.8, ls="--")
    ax.set_xlabel(xlabel)
    ax.set_ylabel("pixels")
    ax.set_title(title)
    save_figure(fig, path)


def bar_figure(values: dict, path, title="", ylabel="") -> None:
    fig, ax = plt.subplots(figsize=(4, 2.6))
    keys = list(values)
    ax.bar(range(len(keys)), [values[k] for k in keys], color="0.4")
    ax.set_xticks(range(len(keys)), keys, rotation=30)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    save_figure(fig, path)
