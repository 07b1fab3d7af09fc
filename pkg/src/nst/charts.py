"""Chart rendering for fit inspection and market comparison.

Everything goes through the object-oriented matplotlib API with an
explicit Agg canvas: no pyplot, no global figure registry, safe to call
from worker threads.  Output is pinned for byte determinism: fixed
640x480 raster, fixed color cycle, and the PNG software tag stripped so
re-rendering identical inputs reproduces the file exactly.
"""

from __future__ import annotations

import os

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from . import dual as dn
from .engine import PathEnsemble

FIGSIZE = (6.4, 4.8)
DPI = 100
MAX_DRAWN_PATHS = 10

# tab10 hex values, fixed here so rcParams changes cannot leak in
PATH_COLORS = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)

_PNG_METADATA = {"Software": None}


def _new_figure() -> tuple[Figure, FigureCanvasAgg]:
    fig = Figure(figsize=FIGSIZE, dpi=DPI)
    canvas = FigureCanvasAgg(fig)
    return fig, canvas


def _save(fig: Figure, path: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fig.savefig(path, format="png", dpi=DPI, metadata=_PNG_METADATA)


def render_fit_chart(dataset: np.ndarray, ensemble: PathEnsemble, path: str) -> str:
    """Historical series (black) with up to 10 simulated paths overlaid.

    Both axes span [0, 1]; the dataset and ensemble are expected to be
    on that normalized scale already.  No title or legend, ticks only.
    """
    y = np.asarray(dataset, dtype=float)
    sims = np.asarray(dn.value_of(ensemble.values))
    fig, _ = _new_figure()
    ax = fig.add_subplot(1, 1, 1)
    x_sim = np.linspace(0.0, 1.0, sims.shape[1])
    for i in range(min(sims.shape[0], MAX_DRAWN_PATHS)):
        ax.plot(x_sim, sims[i], color=PATH_COLORS[i % len(PATH_COLORS)],
                linewidth=0.9)
    ax.plot(np.linspace(0.0, 1.0, y.size), y, color="black", linewidth=1.6)
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    _save(fig, path)
    return path


def render_market_chart(
    historical: np.ndarray,
    simulated: np.ndarray,
    boundaries: list[int],
    path: str,
) -> str:
    """Historical prices (black) against the simulated price path, one
    color per window, windows separated by dashed vertical lines.

    ``boundaries`` holds the start index of each window; both series are
    plotted on their raw price scale against the step index.
    """
    hist = np.asarray(historical, dtype=float)
    sim = np.asarray(simulated, dtype=float)
    fig, _ = _new_figure()
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(np.arange(hist.size), hist, color="black", linewidth=1.6)
    edges = list(boundaries) + [sim.size]
    for w in range(len(boundaries)):
        lo, hi = edges[w], edges[w + 1]
        # extend one step back so segments join without gaps
        seg_lo = max(lo - 1, 0)
        ax.plot(np.arange(seg_lo, hi), sim[seg_lo:hi],
                color=PATH_COLORS[w % len(PATH_COLORS)], linewidth=1.1)
        if w > 0:
            ax.axvline(lo, color="#999999", linewidth=0.8, linestyle="--")
    ax.set_xlim(0, max(hist.size, sim.size) - 1)
    _save(fig, path)
    return path
