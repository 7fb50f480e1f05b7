"""Figure rendering for fit traces and marginal-cost grids.

Everything draws to files through the Agg backend; no display is needed.
These plots mirror the delimited outputs of the command-line harness: the
column-norm and cost trajectories of a trace CSV, and the contour of the
marginal cost over a two-column dictionary grid.
"""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .inference import read_trace_csv

__all__ = ["plot_trace_norms", "plot_trace_cost", "plot_ml_grid", "load_grid_csv"]

_COLORS = plt.rcParams["axes.prop_cycle"].by_key()["color"]


def _load_traces(traces, labels):
    loaded = []
    for i, t in enumerate(traces):
        data = read_trace_csv(t) if not isinstance(t, dict) else t
        label = labels[i] if labels and i < len(labels) else f"run {i + 1}"
        loaded.append((label, data))
    return loaded


def plot_trace_norms(traces, out_path, labels=None, x_axis="cpu"):
    """Column norms of the dictionary iterates, one line per column, one
    color per run. ``x_axis`` is ``cpu`` (seconds) or ``iter``."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, (label, data) in enumerate(_load_traces(traces, labels)):
        x = data["cpu_seconds"] if x_axis == "cpu" else data["iter"]
        color = _COLORS[i % len(_COLORS)]
        for k in range(data["norms"].shape[1]):
            ax.plot(
                x,
                data["norms"][:, k],
                color=color,
                label=label if k == 0 else None,
            )
    ax.set_xlabel("CPU time (s)" if x_axis == "cpu" else "iteration")
    ax.set_ylabel("column norm")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_trace_cost(traces, out_path, labels=None, x_axis="cpu"):
    """Exact marginal cost along the iterates, one line per run."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    for i, (label, data) in enumerate(_load_traces(traces, labels)):
        if data["c_ml"] is None:
            continue
        x = data["cpu_seconds"] if x_axis == "cpu" else data["iter"]
        keep = ~np.isnan(data["c_ml"])
        ax.plot(
            np.asarray(x)[keep],
            data["c_ml"][keep],
            color=_COLORS[i % len(_COLORS)],
            label=label,
        )
    ax.set_xlabel("CPU time (s)" if x_axis == "cpu" else "iteration")
    ax.set_ylabel("marginal cost")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def load_grid_csv(path):
    """Read a ``w1,w2,c_ml`` grid CSV into three arrays."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data["w1"], data["w2"], data["c_ml"]


def plot_ml_grid(grid_path, out_path, trace_path=None, levels=30):
    """Contour of the marginal cost over a (w1, w2) grid, optionally
    overlaying the trajectory of a two-column fit (whose column norms are
    exactly its dictionary entries when there is a single row)."""
    w1, w2, cost = load_grid_csv(grid_path)
    xs = np.unique(w1)
    ys = np.unique(w2)
    z = np.full((ys.size, xs.size), np.nan)
    xi = np.searchsorted(xs, w1)
    yi = np.searchsorted(ys, w2)
    z[yi, xi] = cost
    finite = np.isfinite(z)
    fig, ax = plt.subplots(figsize=(5.4, 4.6))
    contour = ax.contour(
        xs,
        ys,
        np.where(finite, z, np.nanmax(z[finite]) if finite.any() else 1.0),
        levels=levels,
        linewidths=0.7,
    )
    ax.clabel(contour, inline=True, fontsize=6, fmt="%.0f")
    if trace_path is not None:
        data = read_trace_csv(trace_path)
        if data["norms"].shape[1] != 2:
            raise ValueError("grid overlay needs a two-component trace")
        ax.plot(data["norms"][:, 0], data["norms"][:, 1], "r.-", ms=3, lw=0.8)
    ax.set_xlabel("w1")
    ax.set_ylabel("w2")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
