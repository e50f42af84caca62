"""
Figures of simulation runs, written as reproducible SVG.
"""

from __future__ import annotations

from os import PathLike
from typing import IO

import matplotlib
import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Polygon

from .cost import BoundError, bound_factors
from .density import GaussianMixtureDensity
from .geometry import ConvexPolygon, order_two_voronoi, polygon_diameter
from .simulator import SimulationTrace

__all__ = ["coverage_figure", "save_svg"]

SVG_HASH_SALT = "photocov"
CONTOUR_RESOLUTION = 150


def coverage_figure(
    trace: SimulationTrace,
    Q: ConvexPolygon,
    density: GaussianMixtureDensity,
    fov_radius: float,
    grid_cost_h: float | None = None,
    title: str | None = None,
) -> Figure:
    """Two panels: the region and the run, and the costs over time.

    The left panel shows density contours, the second-order partition of the final
    configuration, dashed trajectories, and initial (hollow) and final (filled) positions.
    The right panel shows H_h, H_g and, when defined, the bound H_g/β², with the grid
    baseline's H_h as a dashed line.
    """
    fig = Figure(figsize=(11, 5), constrained_layout=True)
    ax, axc = fig.subplots(1, 2, gridspec_kw={"width_ratios": [1, 1.2]})

    x0, y0, x1, y1 = Q.bounding_box()
    X, Y = np.meshgrid(
        np.linspace(x0, x1, CONTOUR_RESOLUTION), np.linspace(y0, y1, CONTOUR_RESOLUTION)
    )
    Z = density(np.stack([X, Y], axis=-1))
    ax.contourf(X, Y, Z, levels=12, cmap="Greys", alpha=0.5)

    partition = order_two_voronoi(trace.final, Q)
    for cell in partition.nonempty().values():
        ax.add_patch(
            Polygon(cell.vertices, closed=True, fill=False, edgecolor="tab:blue", linewidth=0.6)
        )
    ax.add_patch(Polygon(Q.vertices, closed=True, fill=False, edgecolor="black", linewidth=1.2))

    for i in range(trace.positions.shape[1]):
        ax.plot(
            trace.positions[:, i, 0],
            trace.positions[:, i, 1],
            linestyle="--",
            linewidth=0.8,
            color="dimgray",
        )
    start = trace.positions[0]
    end = trace.positions[-1]
    ax.scatter(start[:, 0], start[:, 1], facecolors="none", edgecolors="black", s=30, label="initial")
    ax.scatter(end[:, 0], end[:, 1], color="tab:red", s=30, label="final")
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.legend(loc="upper right", fontsize="small")

    t = np.array([r.time for r in trace.records])
    cost_h = trace.costs_h()
    cost_g = trace.costs_g()
    axc.plot(t, cost_h, color="tab:red", label="H_h")
    axc.plot(t, cost_g, color="tab:blue", label="H_g")
    try:
        bound = bound_factors(fov_radius, polygon_diameter(Q))
        axc.plot(t, bound.upper_factor * cost_g, color="tab:blue", linestyle=":", label="H_g/β²")
    except BoundError:
        pass
    if grid_cost_h is not None:
        axc.axhline(grid_cost_h, color="tab:red", linestyle="--", label="grid H_h")
    axc.set_yscale("log")
    axc.set_xlabel("time (s)")
    axc.set_ylabel("cost")
    axc.grid(True, alpha=0.3)
    axc.legend(fontsize="small")

    if title is not None:
        fig.suptitle(title)
    return fig


def save_svg(fig: Figure, filename_or_stream: str | PathLike | IO) -> None:
    """Saves an SVG with no date and fixed element ids, so reruns are byte-identical."""
    with matplotlib.rc_context({"svg.hashsalt": SVG_HASH_SALT}):
        fig.savefig(filename_or_stream, format="svg", metadata={"Date": None})
