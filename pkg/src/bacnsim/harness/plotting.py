"""Figures for sweep output (non-interactive backend, files only)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _x(v):
    return float("inf") if str(v) == "inf" else float(v)


def plot_sweep(rows, param, path, metric="throughput"):
    """One line per policy: mean over seeds with standard-error bars.

    An infinite sweep value is drawn one step past the largest finite one.
    """
    from .runner import aggregate

    agg = aggregate(rows, metric)
    xs_all = sorted({_x(v) for (_, v) in agg})
    finite = [x for x in xs_all if x != float("inf")]
    inf_pos = (max(finite) * 2 if finite and max(finite) > 0 else 1.0)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for pol in sorted({p for (p, _) in agg}):
        pts = sorted((_x(v), m, se) for (p, v), (m, se, _) in agg.items() if p == pol)
        xs = [inf_pos if x == float("inf") else x for x, _, _ in pts]
        ax.errorbar(xs, [m for _, m, _ in pts], yerr=[se for _, _, se in pts],
                    marker="o", capsize=3, label=pol)
    ax.set_xlabel(param)
    ax.set_ylabel(metric)
    if float("inf") in xs_all:
        ticks = finite + [inf_pos]
        ax.set_xticks(ticks)
        ax.set_xticklabels([f"{t:g}" for t in finite] + ["inf"])
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path
