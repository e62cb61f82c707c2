"""Figures written next to the CSV outputs (Agg backend, no display needed)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

LABELS = {
    "mean_episode_reward": "Mean episode reward",
    "dormant_ratio": "Dormant units (%)",
    "learning_rate": "Learning rate",
    "standard": "Standard PPO",
    "l2": "L2 PPO",
    "recom_l2": "RECOM + L2 PPO",
}
COLOURS = {"standard": "tab:red", "l2": "tab:blue", "recom_l2": "tab:green"}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_comparison(comp, metric: str, path):
    """Seed-mean trace per variant with a min/max band."""
    fig, ax = plt.subplots(figsize=(6.4, 3.6))
    scale = 100.0 if metric == "dormant_ratio" else 1.0
    for name in sorted(comp.variants):
        tr = comp.variants[name]
        x = tr.steps
        c = COLOURS.get(name)
        ax.plot(x, scale * tr.mean(metric), color=c, label=LABELS.get(name, name))
        if len(tr.seeds) > 1:
            ax.fill_between(x, scale * tr.lo(metric), scale * tr.hi(metric), color=c, alpha=0.2, lw=0)
    if metric == "learning_rate":
        ax.set_yscale("log")
    ax.set_xlabel("Timesteps")
    ax.set_ylabel(LABELS.get(metric, metric))
    ax.legend(frameon=False)
    return _finish(fig, path)


def plot_metrics(metrics: dict, path):
    """Reward, learning rate and dormant ratio of a single run."""
    fig, axes = plt.subplots(3, 1, figsize=(6.4, 6.4), sharex=True)
    x = metrics["global_step"]
    for ax, key in zip(axes, ("mean_episode_reward", "learning_rate", "dormant_ratio")):
        y = metrics[key] * (100.0 if key == "dormant_ratio" else 1.0)
        ax.plot(x, y, lw=1.2)
        ax.set_ylabel(LABELS[key])
    axes[-1].set_xlabel("Timesteps")
    return _finish(fig, path)


def plot_eval_positions(trajectories, dt: float, path):
    """Per-axis position traces of evaluation episodes."""
    fig, axes = plt.subplots(3, 1, figsize=(6.4, 5.6), sharex=True)
    for traj in trajectories:
        t = np.arange(len(traj)) * dt
        for i, ax in enumerate(axes):
            ax.plot(t, traj[:, i], lw=0.9, alpha=0.8)
    for ax, name in zip(axes, "xyz"):
        ax.axhline(0.0, color="k", lw=0.6, ls="--")
        ax.set_ylabel(f"{name} (m)")
    axes[-1].set_xlabel("Time (s)")
    return _finish(fig, path)
