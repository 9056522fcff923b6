"""Figures for run reports and synthetic benchmarks (file output only)."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.frameon": False,
}

# no version string or date in the file, so twin runs give identical bytes
PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, format="png", metadata=PNG_META)
    plt.close(fig)
    return path


def convergence(path: Path, steps: Sequence[int], scores: Sequence[float], best: Sequence[float],
                kinds: Sequence[str], title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for kind in sorted(set(kinds)):
            xs = [s for s, k in zip(steps, kinds) if k == kind]
            ys = [r for r, k in zip(scores, kinds) if k == kind]
            ax.scatter(xs, ys, s=10, alpha=0.6, label=kind)
        ax.step(steps, best, where="post", color="black", lw=1.2, label="best so far")
        ax.set_xlabel("evaluation")
        ax.set_ylabel("fitness")
        if title:
            ax.set_title(title)
        ax.legend(fontsize=7, ncol=2)
        return _save(fig, path)


def advantages(path: Path, table: Mapping[str, Sequence[tuple[str, float]]]) -> Path:
    """One horizontal bar group per factor; ``table`` maps factor -> [(value, A)]."""
    rows = [(f, v, a) for f, vals in table.items() for v, a in vals]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, max(2.5, 0.18 * len(rows) + 0.8)))
        ys = list(range(len(rows)))[::-1]
        colors = [f"C{list(table).index(f) % 10}" for f, _, _ in rows]
        ax.barh(ys, [a for _, _, a in rows], color=colors)
        ax.set_yticks(ys, [f"{f}={v}" for f, v, _ in rows], fontsize=7)
        ax.axvline(0, color="black", lw=0.8)
        ax.set_xlabel("advantage")
        return _save(fig, path)


def bench_boxplot(path: Path, groups: Mapping[str, Sequence[float]], ylabel: str = "gap to optimum") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        names = list(groups)
        ax.boxplot([groups[n] for n in names])
        ax.set_xticks(range(1, len(names) + 1), names)
        ax.set_ylabel(ylabel)
        return _save(fig, path)
