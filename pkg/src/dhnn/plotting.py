"""Figures rendered next to the text exports of the command line.

Uses the object-oriented matplotlib API with the Agg canvas, so no display
or global pyplot state is involved.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure


def _save(fig, path):
    FigureCanvasAgg(fig)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    return path


def plot_rollouts(path, curves, energy=None, title=None):
    """``curves`` maps a label to a Trajectory; ``energy`` maps the same labels
    to energy series (optional third panel)."""
    n = 3 if energy else 2
    fig = Figure(figsize=(4.0 * n, 3.4))
    axes = fig.subplots(1, n)
    for label, traj in curves.items():
        axes[0].plot(traj.times, traj.q, label=label)
        axes[1].plot(traj.q, traj.p, label=label)
        if energy and label in energy:
            axes[2].plot(traj.times, energy[label], label=label)
    axes[0].set(xlabel="t", ylabel="q", title="position")
    axes[1].set(xlabel="q", ylabel="p", title="phase space")
    if energy:
        axes[2].set(xlabel="t", ylabel="H", title="energy")
    axes[0].legend(fontsize=8)
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_fields(path, X, Y, panels, scalars=None, stride=None):
    """Quiver panels (``label -> (u, v)``) and optional filled contours of
    scalars (``label -> array``) on the mesh ``X, Y``."""
    scalars = scalars or {}
    n = len(panels) + len(scalars)
    fig = Figure(figsize=(3.6 * n, 3.4))
    axes = np.atleast_1d(fig.subplots(1, n))
    if stride is None:
        stride = max(1, X.shape[0] // 20)
    sl = (slice(None, None, stride), slice(None, None, stride))
    for ax, (label, (u, v)) in zip(axes, panels.items()):
        ax.quiver(X[sl], Y[sl], u[sl], v[sl], np.hypot(u[sl], v[sl]), cmap="viridis")
        ax.set_title(label)
        ax.set_aspect("equal")
    for ax, (label, s) in zip(axes[len(panels):], scalars.items()):
        cs = ax.contourf(X, Y, s, levels=20, cmap="RdBu_r")
        fig.colorbar(cs, ax=ax, shrink=0.8)
        ax.set_title(label)
        ax.set_aspect("equal")
    return _save(fig, path)


def plot_losses(path, histories):
    """``histories`` maps a label to a list of ``(step, loss)`` pairs."""
    fig = Figure(figsize=(5.0, 3.4))
    ax = fig.subplots()
    for label, losses in histories.items():
        if losses:
            steps, values = zip(*losses)
            ax.semilogy(steps, values, label=label, lw=0.8)
    ax.set(xlabel="step", ylabel="train loss")
    ax.legend(fontsize=8)
    return _save(fig, path)
