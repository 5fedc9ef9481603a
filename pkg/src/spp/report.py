"""Figure rendering for run reports: trajectory overviews and reach-set
contours, written as deterministic SVG files next to the text artifacts."""

from __future__ import annotations

import math

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

_COLORS = ("tab:blue", "tab:red", "tab:green", "tab:purple", "tab:orange",
           "tab:brown", "tab:pink", "tab:olive")


def _save(fig, path):
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_overview(path, scenario, plans, trajectories=None):
    """Trajectories, targets, danger zones, and static obstacles on one axes.

    ``trajectories`` maps vehicle id to a simulated Trajectory; when absent,
    nominal trajectories are drawn where available.
    """
    fig, ax = plt.subplots(figsize=(6, 6))
    g = scenario.grid
    ax.set_xlim(g.mins[0], g.maxs[0])
    ax.set_ylim(g.mins[1], g.maxs[1])
    ax.set_aspect("equal")
    ax.set_title(f"{scenario.name}: trajectories and danger zones")

    for ob in scenario.static_obstacles:
        if ob.kind == "disk":
            ax.add_patch(plt.Circle(ob.center, ob.radius, color="0.4", alpha=0.6))
        else:
            ax.add_patch(plt.Rectangle(ob.mins, ob.maxs[0] - ob.mins[0],
                                       ob.maxs[1] - ob.mins[1], color="0.4", alpha=0.6))

    R_c = scenario.config.collision_radius
    for k, plan in enumerate(plans):
        color = _COLORS[k % len(_COLORS)]
        spec = plan.vehicle
        ax.add_patch(plt.Circle(spec.target_center, spec.target_radius,
                                fill=False, color=color, linestyle="--"))
        traj = None
        if trajectories and spec.id in trajectories:
            traj = trajectories[spec.id]
        elif plan.nominal_trajectory is not None:
            traj = plan.nominal_trajectory
        if traj is not None:
            ax.plot(traj.states[:, 0], traj.states[:, 1], color=color,
                    label=f"vehicle {spec.id}")
            end = traj.states[-1]
            ax.add_patch(plt.Circle((end[0], end[1]), R_c, fill=False,
                                    color=color, alpha=0.5))
        ax.plot([spec.x0.px], [spec.x0.py], marker="o", color=color)
    ax.legend(loc="lower left", fontsize=8)
    _save(fig, path)


def render_brs_contours(path, scenario, plan, times=None, n_times=4):
    """Zero-level contours of one vehicle's reach set, sliced at its initial
    heading, at a handful of times."""
    vf = plan.value
    if times is None:
        idx = np.linspace(0, len(vf.times) - 1, n_times).round().astype(int)
        times = [float(vf.times[i]) for i in dict.fromkeys(idx)]
    g = scenario.grid
    theta0 = plan.vehicle.x0.theta
    ks = int(round(theta0 / g.spacing[2])) % g.counts[2]
    xs = np.linspace(g.mins[0], g.maxs[0], g.counts[0])
    ys = np.linspace(g.mins[1], g.maxs[1], g.counts[1])

    fig, ax = plt.subplots(figsize=(6, 6))
    ax.set_aspect("equal")
    ax.set_title(f"vehicle {plan.vehicle.id}: reach set at heading slice "
                 f"{theta0:.2f} rad")
    for i, t in enumerate(times):
        sl = vf.field_at(t).values[:, :, ks]
        color = _COLORS[i % len(_COLORS)]
        ax.contour(xs, ys, sl.T, levels=[0.0], colors=[color])
        ax.plot([], [], color=color, label=f"t={t:.2f}")
    spec = plan.vehicle
    ax.add_patch(plt.Circle(spec.target_center, spec.target_radius,
                            fill=False, color="k", linestyle="--"))
    ax.plot([spec.x0.px], [spec.x0.py], marker="o", color="k")
    ax.legend(loc="lower left", fontsize=8)
    _save(fig, path)


def render_kernel(path, kernel):
    """Position-plane footprint of a tracking-error kernel."""
    from spp import grid as G

    proj = G.project_min_nonposition(kernel) if kernel.grid.dim > 2 else kernel
    g = proj.grid
    xs = np.linspace(g.mins[0], g.maxs[0], g.counts[0])
    ys = np.linspace(g.mins[1], g.maxs[1], g.counts[1])
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.set_aspect("equal")
    ax.set_title("tracking-error kernel, position projection")
    ax.contourf(xs, ys, proj.values.T, levels=[-1e9, 0.0], colors=["tab:blue"], alpha=0.4)
    ax.contour(xs, ys, proj.values.T, levels=[0.0], colors=["tab:blue"])
    _save(fig, path)
