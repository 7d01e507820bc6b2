"""Matplotlib rendering of experiment results: median error curves with
interquartile bands per method, on a logarithmic error axis."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_COLORS = {
    "maxent-flip": "tab:blue",
    "maxent-kk": "tab:blue",
    "maxent-random": "tab:cyan",
    "random": "tab:red",
    "pca": "tab:green",
}


def plot_summary(summary, path, title=None):
    """Render summary quantile curves to an image file.

    Draws one median line per method with a shaded 25th-75th percentile band,
    sample size on the x axis and normalized error on a log y axis.
    """
    methods = sorted({row.method for row in summary})
    if not methods:
        raise ValueError("summary is empty; nothing to plot")
    fig, ax = plt.subplots(figsize=(6.4, 4.2), constrained_layout=True)
    for method in methods:
        rows = sorted((r for r in summary if r.method == method), key=lambda r: r.sample_size)
        sizes = [r.sample_size for r in rows]
        color = _COLORS.get(method)
        ax.plot(sizes, [r.median for r in rows], label=method, color=color, marker="o", markersize=3)
        ax.fill_between(sizes, [r.q25 for r in rows], [r.q75 for r in rows], alpha=0.2, color=color)
    ax.set_xlabel("sample size n")
    ax.set_ylabel("normalized error")
    ax.set_yscale("log")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, which="both", alpha=0.25)
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_image_pair(original, recovered, path, title=None):
    """Render an original/recovered grayscale image pair side by side."""
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 4.2), constrained_layout=True)
    for ax, img, label in zip(axes, (original, recovered), ("original", "recovered")):
        ax.imshow(img, cmap="gray", vmin=0, vmax=255)
        ax.set_title(label)
        ax.axis("off")
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=150)
    plt.close(fig)
