"""Optional figures written next to the CSV outputs (matplotlib, headless)."""

from __future__ import annotations

import math
from typing import Sequence


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_convergence(curves: Sequence[tuple[str, Sequence[float], Sequence[float]]], path: str,
                     title: str = "", target: float | None = None) -> None:
    """``curves`` holds (label, times, grad_norm_sq) triples; log-scale y axis."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for label, t, g in curves:
        pts = [(a, b) for a, b in zip(t, g) if b > 0 and math.isfinite(b)]
        if pts:
            ax.plot([a for a, _ in pts], [b for _, b in pts], label=label, lw=1.2)
    if target is not None:
        ax.axhline(target, color="grey", ls="--", lw=0.8)
    ax.set_yscale("log")
    ax.set_xlabel("time (seconds)")
    ax.set_ylabel(r"$\|\nabla f(x^k)\|^2$")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_level_times(samples: Sequence[float], threshold: float, path: str) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    finite = [s for s in samples if math.isfinite(s)]
    ax.hist(finite, bins=60, color="tab:blue", alpha=0.8)
    ax.axvline(threshold, color="tab:red", ls="--", label="threshold")
    ax.set_xlabel("level time")
    ax.set_ylabel("samples")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
