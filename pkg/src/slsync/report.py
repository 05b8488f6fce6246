"""Figures written next to the CLI's delimited outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

REGION_COLOURS = {
    "Active+PhaseLocked": "#4caf50",
    "Active+Incoherent": "#a5d6a7",
    "AmplitudeDeath+PhaseLocked": "#e53935",
    "AmplitudeDeath+Incoherent": "#ef9a9a",
}
UNDETERMINED = "#9e9e9e"


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def phase_diagram(diagram, path, curves=None, title=None):
    """Coloured label grid; ``curves`` maps a legend name to (x, y) arrays in axis order."""
    from matplotlib.colors import ListedColormap

    names = list(REGION_COLOURS) + ["other"]
    grid = diagram.label_grid()
    idx = np.vectorize(lambda s: names.index(s) if s in REGION_COLOURS else len(names) - 1)(grid)
    cmap = ListedColormap(list(REGION_COLOURS.values()) + [UNDETERMINED])
    x, y = diagram.axes[0].values, diagram.axes[1].values
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    ax.pcolormesh(x, y, idx.T, cmap=cmap, vmin=-0.5, vmax=len(names) - 0.5, shading="nearest")
    leaders = np.array([c.leader_driven for c in diagram.cells]).reshape(diagram.shape)
    if leaders.any():
        xs, ys = np.meshgrid(x, y, indexing="ij")
        ax.scatter(xs[leaders], ys[leaders], s=2, c="k", marker=".", label="leader-driven")
    for name, (cx, cy) in (curves or {}).items():
        ax.plot(cx, cy, lw=1.2, label=name)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in REGION_COLOURS.values()]
    leg1 = ax.legend(handles, list(REGION_COLOURS), fontsize=6, loc="upper left")
    ax.add_artist(leg1)
    if curves or leaders.any():
        ax.legend(fontsize=6, loc="lower right")
    ax.set_xlim(x.min(), x.max())
    ax.set_ylim(y.min(), y.max())
    ax.set_xlabel(diagram.axes[0].name)
    ax.set_ylabel(diagram.axes[1].name)
    ax.set_title(title or f"{diagram.provenance} {diagram.params_base}", fontsize=8)
    return _save(fig, path)


def curves_plot(curves: dict, path, xlabel="gamma", ylabel="kappa", title=None):
    fig, ax = plt.subplots(figsize=(5, 4))
    for name, (cx, cy) in curves.items():
        if len(cx):
            ax.plot(cx, cy, ".-" if len(cx) < 3 else "-", lw=1.2, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    return _save(fig, path)


def bifurcation_plot(report, path, title=None):
    """First two components of the traced branch against kappa, with events marked."""
    fig, ax = plt.subplots(figsize=(5, 4))
    k = np.array([b[0] for b in report.branch])
    x = np.array([b[1] for b in report.branch])
    stable = np.array([b[2].value == "Stable" for b in report.branch])
    for j in range(min(x.shape[1], 3)):
        ax.plot(k, x[:, j], lw=0.8, color=f"C{j}", label=f"x_{j + 1}")
        ax.plot(k[stable], x[stable, j], ".", ms=2, color=f"C{j}")
    for kv, kind in zip(report.kappa_values, report.kinds):
        ax.axvline(kv, ls=":", color="k", lw=0.8)
        ax.text(kv, ax.get_ylim()[1], kind, rotation=90, fontsize=6, va="top")
    ax.set_xlabel("kappa")
    ax.set_ylabel("x")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title, fontsize=9)
    return _save(fig, path)


def trajectory_plot(traj, path, title=None):
    """Amplitudes (log scale) and unwrapped phase differences against time."""
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    lr = traj.log_r / np.log(10)
    for j in range(traj.params.n):
        a1.plot(traj.times, lr[:, j], lw=0.8, label=f"log10 r_{j + 1}")
    for k in range(1, traj.params.n):
        a2.plot(traj.times, traj.phase_diff(0, k), lw=0.8, label=f"Phi_1{k + 1}")
    a1.legend(fontsize=6)
    a2.legend(fontsize=6)
    a2.set_xlabel("t")
    if title:
        a1.set_title(title, fontsize=9)
    return _save(fig, path)
