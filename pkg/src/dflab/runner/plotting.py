"""Render experiment figures to PNG files with matplotlib (Agg backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed metadata keeps repeated renders byte-identical
_META = {"Software": None}


def _lines(ax, data: dict) -> None:
    x = np.asarray(data["x"], dtype=float)
    for label, y in data["series"].items():
        ax.plot(x, np.asarray(y, dtype=float), marker="o", ms=3, label=label)
    if data.get("logx"):
        ax.set_xscale("log")
    if data.get("logy"):
        ax.set_yscale("log")
    ax.set_xlabel(data.get("xlabel", ""))
    ax.set_ylabel(data.get("ylabel", ""))
    if len(data["series"]) > 1:
        ax.legend(fontsize=7)


def _heatmap(fig, ax, data: dict) -> None:
    z = np.asarray(data["z"], dtype=float)
    im = ax.imshow(z, aspect="auto", origin="lower", cmap="viridis", interpolation="nearest")
    fig.colorbar(im, ax=ax, label=data.get("label", ""))
    ax.set_xlabel(data.get("xlabel", ""))
    ax.set_ylabel(data.get("ylabel", ""))


def render(fig_spec, directory: str | Path) -> Path:
    """Draw one figure and write ``<name>.png`` into ``directory``."""
    fig, ax = plt.subplots(figsize=(5, 3.5), dpi=100)
    if fig_spec.kind == "heatmap":
        _heatmap(fig, ax, fig_spec.data)
    elif fig_spec.kind == "lines":
        _lines(ax, fig_spec.data)
    else:
        plt.close(fig)
        raise ValueError(f"unknown figure kind {fig_spec.kind!r}")
    ax.set_title(fig_spec.name, fontsize=9)
    fig.tight_layout()
    path = Path(directory) / f"{fig_spec.name}.png"
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path
