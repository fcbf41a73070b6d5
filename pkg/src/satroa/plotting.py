"""Figures for sweeps and single trajectories, rendered to byte-stable SVG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from .roa import ellipsoid_boundary_samples  # noqa: E402
from .sim import Classification, SweepResult, Trajectory  # noqa: E402

COLORS = {
    Classification.CONVERGED: "black",
    Classification.DIVERGED: "red",
    Classification.UNDECIDED: "0.6",
}
REGION_COLOR = "#3b6fd6"

_RC = {
    "svg.hashsalt": "satroa",
    "svg.fonttype": "path",
    "font.size": 9,
    "axes.linewidth": 0.8,
    "path.simplify": False,
}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def sweep_figure(result: SweepResult, path: str | Path, *, title: str | None = None) -> None:
    """Certified ellipse (filled) under converged (black) and diverged (red) trajectories."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.0, 4.2))
        (x0, x1), (y0, y1) = result.bounds
        cert = result.certificate
        if cert is not None and not cert.is_global:
            P, rho = cert.plant_ellipsoid()
            edge = ellipsoid_boundary_samples(P[:2, :2], rho, 400)
            ax.add_patch(Polygon(edge, closed=True, facecolor=REGION_COLOR, edgecolor=REGION_COLOR,
                                 alpha=0.45, linewidth=1.0, zorder=3))
        for path_xy, label in zip(result.paths, result.labels):
            ax.plot(path_xy[:, 0], path_xy[:, 1], color=COLORS[label], linewidth=0.35, zorder=2)
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
        ax.set_xlabel("$w_1$")
        ax.set_ylabel("$w_2$")
        if title:
            ax.set_title(title)
        fig.tight_layout()
        _save(fig, path)


def trajectory_figure(traj: Trajectory, path: str | Path, *, modes: int | None = None) -> None:
    """Modal coordinates against time, with the Lyapunov value on a second panel when present."""
    k = traj.states.shape[1] if modes is None else min(modes, traj.states.shape[1])
    labels = traj.labels or tuple(f"w{j + 1}" for j in range(traj.states.shape[1]))
    with plt.rc_context(_RC):
        rows = 2 if traj.lyapunov is not None else 1
        fig, axes = plt.subplots(rows, 1, figsize=(5.0, 2.4 * rows), sharex=True, squeeze=False)
        ax = axes[0, 0]
        for j in range(k):
            ax.plot(traj.times, traj.states[:, j], linewidth=0.9, label=labels[j])
        ax.set_ylabel("state")
        ax.legend(fontsize=7, ncol=min(k, 4), frameon=False)
        if traj.lyapunov is not None:
            ax2 = axes[1, 0]
            ax2.semilogy(traj.times, np.maximum(traj.lyapunov, 1e-300), color="black", linewidth=0.9)
            ax2.set_ylabel("V")
        axes[-1, 0].set_xlabel("t")
        fig.tight_layout()
        _save(fig, path)
