"""Figure rendering for the CLI report paths.

Every report subcommand saves matplotlib figures next to its delimited
output.  Rendering is file-only (Agg backend); nothing opens a window.
"""

from __future__ import annotations

import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .optimization import DELTA_LABELS, SENS_ROW_LABELS


def _save(fig, outdir, name):
    path = os.path.join(outdir, name)
    fig.savefig(path, dpi=130, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_trajectory(traj, outdir, prefix="trajectory"):
    """Body state, energy and torque figures for one recorded run."""
    paths = []
    t = traj.t

    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    ax = axes[0, 0]
    for i, lbl in enumerate(("x1", "x2", "x3")):
        ax.plot(t, traj.x[:, i], label=lbl)
    ax.set_ylabel("position [m]")
    ax.legend(fontsize=8)
    ax = axes[0, 1]
    for i, lbl in enumerate(("v1", "v2", "v3")):
        ax.plot(t, traj.v[:, i], label=lbl)
    ax.set_ylabel("velocity [m/s]")
    ax.legend(fontsize=8)
    ax = axes[1, 0]
    pitch = np.degrees(np.arctan2(-traj.R[:, 2, 0], traj.R[:, 0, 0]))
    ax.plot(t, pitch, label="body pitch [deg]")
    ax.plot(t, traj.Om[:, 1], label="Om2 [rad/s]")
    ax.set_xlabel("t [s]")
    ax.legend(fontsize=8)
    ax = axes[1, 1]
    ax.plot(t, traj.E, label="E [J]")
    ax.plot(t, traj.Edot, label="dE/dt [W]")
    ax.set_xlabel("t [s]")
    ax.legend(fontsize=8)
    fig.suptitle("body state and energy")
    paths.append(_save(fig, outdir, f"{prefix}_state.png"))

    fig, axes = plt.subplots(1, 2, figsize=(10, 3.5))
    names = ("right wing", "left wing", "abdomen")
    for k in range(3):
        axes[0].plot(t, np.linalg.norm(traj.tau[:, k], axis=1), label=names[k])
        axes[1].plot(t, traj.P[:, k], label=names[k])
    axes[0].set_ylabel("|tau| [N m]")
    axes[1].set_ylabel("joint power [W]")
    for ax in axes:
        ax.set_xlabel("t [s]")
        ax.legend(fontsize=8)
    fig.suptitle("joint torques and power")
    paths.append(_save(fig, outdir, f"{prefix}_torque_power.png"))
    return paths


def plot_comparison(report, outdir):
    """Paired undulating vs fixed-abdomen series from compare_abdomen."""
    su, sf = report["series_undulating"], report["series_fixed"]
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    panels = (
        ("E", "energy E [J]"),
        ("P_R", "right-wing power [W]"),
        ("tau_R_norm", "|tau_R| [N m]"),
        ("tau_A_norm", "|tau_A| [N m]"),
    )
    for ax, (key, label) in zip(axes.ravel(), panels):
        ax.plot(su["t"], su[key], "b", label="undulating")
        ax.plot(sf["t"], sf[key], "r", label="fixed abdomen")
        ax.set_ylabel(label)
        ax.set_xlabel("t [s]")
        ax.legend(fontsize=8)
    fig.suptitle(
        f"J undulating = {report['J_undulating']:.4g}, "
        f"J fixed = {report['J_fixed']:.4g} "
        f"({report['J_change_pct']:+.1f}%)")
    return [_save(fig, outdir, "abdomen_comparison.png")]


def plot_sensitivity(table, outdir):
    scales = np.array([1e4, 1e4, 1e4, 1e5, 1e5, 1e5])[:, None]
    scaled = table * scales
    fig, ax = plt.subplots(figsize=(7, 5))
    vmax = np.max(np.abs(scaled)) or 1.0
    im = ax.imshow(scaled, cmap="RdBu_r", vmin=-vmax, vmax=vmax)
    ax.set_xticks(range(len(DELTA_LABELS)), DELTA_LABELS, rotation=45,
                  ha="right", fontsize=8)
    ax.set_yticks(range(len(SENS_ROW_LABELS)), SENS_ROW_LABELS, fontsize=8)
    for i in range(scaled.shape[0]):
        for j in range(scaled.shape[1]):
            ax.text(j, i, f"{scaled[i, j]:.1f}", ha="center", va="center",
                    fontsize=7)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title("cycle-averaged load change per control offset")
    return [_save(fig, outdir, "sensitivity.png")]


def plot_stabilization(times, controlled, uncontrolled, outdir):
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.semilogy(times, np.maximum(controlled, 1e-12), "bo-",
                label="controlled")
    ax.semilogy(times, np.maximum(uncontrolled, 1e-12), "rs--",
                label="uncontrolled")
    ax.set_xlabel("t [s]")
    ax.set_ylabel("weighted tracking error")
    ax.legend()
    ax.set_title("receding-horizon stabilization")
    return [_save(fig, outdir, "stabilization.png")]
