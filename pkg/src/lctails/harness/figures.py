"""Matplotlib figures for the report: empirical tails against fitted bounds."""

from __future__ import annotations

import math
from collections import defaultdict
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_MOMENT_FAMILIES = {"EstNMoment", "LrMomentSmall", "LrMomentLarge", "LinfMoment", "Cond2"}


def _style(ax, family):
    ax.set_yscale("log")
    ax.set_xlabel("p" if family in _MOMENT_FAMILIES - {"EstNMoment", "Cond2"} else "t")
    ax.set_ylabel("value")
    ax.grid(True, which="major", alpha=0.3)


def family_figure(family: str, rows: list[dict], path) -> Path:
    """One panel per (distribution, n): empirical value with CI band and bound at the fitted constant."""
    panels = defaultdict(list)
    for r in rows:
        panels[(r["distribution"], r["n"])].append(r)
    keys = list(panels)
    ncols = min(3, len(keys))
    nrows = -(-len(keys) // ncols)
    fig, axes = plt.subplots(nrows, ncols, figsize=(4.2 * ncols, 3.4 * nrows), squeeze=False)
    for ax, key in zip(axes.flat, keys):
        series = defaultdict(list)
        for r in panels[key]:
            series[r["param"]].append(r)
        floor = math.inf
        for label, pts in series.items():
            pts = sorted(pts, key=lambda r: float(r["t"]))
            t = np.array([float(r["t"]) for r in pts])
            emp = np.array([float(r["empirical"]) for r in pts])
            lo = np.array([float(r["ci_low"]) for r in pts])
            hi = np.array([float(r["ci_high"]) for r in pts])
            rhs = np.array([float(r["rhs"]) if r["in_envelope"] else np.nan for r in pts])
            positive = hi[hi > 0]
            if positive.size:
                floor = min(floor, positive.min())
            line, = ax.plot(t, np.where(emp > 0, emp, np.nan), marker=".", lw=1, label=label or "empirical")
            ax.fill_between(t, np.maximum(lo, 1e-300), hi, color=line.get_color(), alpha=0.15)
            ax.plot(t, rhs, ls="--", lw=1, color=line.get_color())
        if math.isfinite(floor):
            ax.set_ylim(bottom=floor / 10)
        _style(ax, family)
        ax.set_title(f"{key[0]}, n={key[1]}", fontsize=9)
        if len(series) <= 8:
            ax.legend(fontsize=6)
    for ax in list(axes.flat)[len(keys):]:
        ax.set_visible(False)
    fig.suptitle(f"{family}\nsolid: empirical with CI band, dashed: bound at fitted C", fontsize=9)
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path
