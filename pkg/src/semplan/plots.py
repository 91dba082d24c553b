"""Figure rendering for the report paths (PNG files next to the CSVs).

Batch-only: the Agg backend is forced and every function writes a file.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Ellipse, Polygon as MplPolygon  # noqa: E402

_SAVE_KW = {"dpi": 120, "metadata": {"Software": "semplan"}}


def _draw_workspace(ax, workspace):
    xmin, ymin, xmax, ymax = workspace.bounds
    ax.set_xlim(xmin - 0.2, xmax + 0.2)
    ax.set_ylim(ymin - 0.2, ymax + 0.2)
    ax.set_aspect("equal")
    ax.add_patch(MplPolygon([(xmin, ymin), (xmax, ymin), (xmax, ymax), (xmin, ymax)],
                            closed=True, fill=False, edgecolor="black", linewidth=1.2))
    for obs in workspace.obstacles:
        ax.add_patch(MplPolygon(obs, closed=True, facecolor="0.6", edgecolor="0.3"))


def _cov_ellipse(ax, mean, cov, color, alpha=0.25, nsig=2.0):
    w, v = np.linalg.eigh(cov)
    w = np.clip(w, 0, None)
    angle = math.degrees(math.atan2(v[1, -1], v[0, -1]))
    ax.add_patch(Ellipse(mean, 2 * nsig * math.sqrt(w[-1]), 2 * nsig * math.sqrt(w[0]),
                         angle=angle, facecolor=color, alpha=alpha, edgecolor=color))


def plot_plan(scenario, result, path):
    """Workspace, landmark priors and the planned waypoints per robot."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_workspace(ax, scenario.workspace)
    cmap = plt.get_cmap("tab10")
    for lm in scenario.landmarks:
        _cov_ellipse(ax, lm.prior.mean, lm.prior.cov, "tab:red")
        ax.plot(*lm.prior.mean, "x", color="tab:red")
        ax.annotate(lm.id, lm.prior.mean, fontsize=8)
    if result.found:
        for j in range(len(scenario.robots)):
            xs = [p[j][0] for p in result.poses]
            ys = [p[j][1] for p in result.poses]
            ax.plot(xs, ys, "-o", color=cmap(j % 10), markersize=2.5, linewidth=1,
                    label=scenario.robots[j].id)
        ax.legend(loc="upper right", fontsize=8)
        ax.set_title(f"planned path: H={result.horizon}, cost={result.cost:.2f}")
    else:
        ax.set_title("no feasible path found")
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_mission(scenario, trace, path):
    """Executed robot tracks, true target tracks and final estimates."""
    fig, ax = plt.subplots(figsize=(6, 6))
    _draw_workspace(ax, scenario.workspace)
    cmap = plt.get_cmap("tab10")
    n = len(scenario.robots)
    rows = trace.records
    for j in range(n):
        xs = [float(r[1 + 3 * j]) for r in rows]
        ys = [float(r[2 + 3 * j]) for r in rows]
        ax.plot(xs, ys, "-", color=cmap(j % 10), linewidth=1.2,
                label=scenario.robots[j].id)
        ax.plot(xs[0], ys[0], "o", color=cmap(j % 10), markersize=5)
    base = 1 + 3 * n
    for i, lm in enumerate(scenario.landmarks):
        tx = [float(r[base + 6 * i]) for r in rows]
        ty = [float(r[base + 6 * i + 1]) for r in rows]
        ax.plot(tx, ty, ":", color="black", linewidth=0.8)
        ax.plot(tx[-1], ty[-1], "s", color="tab:red", markersize=5)
        ex = float(rows[-1][base + 6 * i + 2])
        ey = float(rows[-1][base + 6 * i + 3])
        ax.plot(ex, ey, "x", color="tab:green", markersize=7)
        ax.annotate(lm.id, (tx[-1], ty[-1]), fontsize=8)
    ax.set_title(f"{trace.status}: {trace.steps} steps, {trace.replans} replans")
    ax.legend(loc="upper right", fontsize=8)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_sweep(rows, path):
    """Runtime and horizon bars over the (robots, landmarks) grid."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    labels = [f"N={r['robots']},M={r['landmarks']}" for r in rows]
    x = np.arange(len(rows))
    ax1.bar(x, [r["mean_runtime_s"] for r in rows], color="tab:blue")
    ax1.set_xticks(x, labels, rotation=30, fontsize=8)
    ax1.set_ylabel("mean runtime (s)")
    ax2.bar(x, [r["mean_horizon"] for r in rows], color="tab:orange")
    ax2.set_xticks(x, labels, rotation=30, fontsize=8)
    ax2.set_ylabel("mean horizon H")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_replan_study(rows, path):
    """Mean replan count per variant."""
    fig, ax = plt.subplots(figsize=(5, 4))
    x = np.arange(len(rows))
    ax.bar(x, [r["mean_replans"] for r in rows], color="tab:purple")
    ax.set_xticks(x, [r["variant"] for r in rows], fontsize=8)
    ax.set_ylabel("mean replans")
    ax.set_xlabel("variant")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
