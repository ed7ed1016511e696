"""SVG rendering of balance plot series.

Output carries no timestamp and uses a fixed hash salt, so identical inputs
give byte-identical files.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .balance import PlotSeries  # noqa: E402

_RC = {"svg.hashsalt": "pswkit", "svg.fonttype": "path"}
_MARKERS = "os^Dvx+*"


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_love(ps: PlotSeries, path: str | Path) -> None:
    values = ps.series["values"]
    schemes = list(values)
    covs = list(next(iter(values.values())))
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(6, 0.35 * len(covs) + 1.5))
        ypos = np.arange(len(covs))[::-1]
        for k, s in enumerate(schemes):
            vals = np.array([values[s][c] for c in covs], float)
            ax.plot(vals, ypos, marker=_MARKERS[k % len(_MARKERS)], linestyle="", label=s)
        if ps.threshold is not None:
            ax.axvline(ps.threshold, linestyle="--", color="grey")
        ax.set_yticks(ypos)
        ax.set_yticklabels(covs)
        ax.set_xlabel(ps.series["metric"])
        ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        _save(fig, path)


def render_density(ps: PlotSeries, path: str | Path) -> None:
    grid = ps.series["grid"]
    panels = ps.series["panels"]
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.2), squeeze=False)
        for ax, (col, dens) in zip(axes[0], panels.items()):
            for g, d in dens.items():
                ax.plot(grid, d, label=g)
            ax.set_xlabel(f"propensity score ({col})")
            ax.set_ylabel("density")
            ax.legend(title="group", fontsize="small")
        fig.tight_layout()
        _save(fig, path)


def render_histogram(ps: PlotSeries, path: str | Path) -> None:
    edges = ps.series["edges"]
    counts = ps.series["counts"]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        groups = list(counts)
        # mirrored histogram: first group below the axis
        for k, g in enumerate(groups):
            sign = -1 if k == 0 else 1
            ax.bar(edges[:-1], sign * counts[g], width=np.diff(edges), align="edge",
                   alpha=0.6, label=g)
        ax.axhline(0, color="black", linewidth=0.5)
        ax.set_xlabel("propensity score")
        ax.set_ylabel("count")
        ax.legend(fontsize="small")
        fig.tight_layout()
        _save(fig, path)


RENDERERS = {"love": render_love, "density": render_density, "histogram": render_histogram}


def render(ps: PlotSeries, path: str | Path) -> None:
    RENDERERS[ps.kind](ps, path)
