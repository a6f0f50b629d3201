"""Figure rendering for the CLI report paths (bench and headless runs)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def save_trajectory_figure(summary, path: str | Path) -> Path:
    """Mean best-found accuracy per iteration, EA vs random sampling."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    x = range(len(summary.ea_mean_trajectory))
    ax.plot(x, summary.ea_mean_trajectory, label="evolutionary search", lw=2)
    ax.plot(x, summary.random_mean_trajectory, label="random sampling", lw=2, ls="--")
    if summary.optimum_accuracy is not None:
        ax.axhline(summary.optimum_accuracy, color="gray", lw=1, ls=":", label="optimum")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mean best-found accuracy")
    ax.set_title(f"best-found accuracy over {len(summary.seeds)} seeds")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_final_accuracy_figure(summary, path: str | Path) -> Path:
    """Per-seed final best accuracy for both strategies."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    seeds = list(summary.seeds)
    ax.scatter(seeds, summary.ea_best, label="evolutionary search", marker="o")
    ax.scatter(seeds, summary.random_best, label="random sampling", marker="x")
    if summary.optimum_accuracy is not None:
        ax.axhline(summary.optimum_accuracy, color="gray", lw=1, ls=":", label="optimum")
    ax.set_xlabel("seed")
    ax.set_ylabel("final best accuracy")
    ax.set_title("final best accuracy per seed")
    ax.legend(loc="lower right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_loss_curve_figure(curve, path: str | Path, title: str = "template training") -> Path:
    """Loss chart: train and validation loss per epoch."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = [p[0] for p in curve]
    ax.plot(epochs, [p[1] for p in curve], label="train loss", lw=2)
    ax.plot(epochs, [p[2] for p in curve], label="validation loss", lw=2, ls="--")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_search_loss_figure(loss_history, path: str | Path) -> Path:
    """Per-iteration candidate loss band (max / mean / min)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    iterations = [t[0] for t in loss_history]
    ax.plot(iterations, [t[1] for t in loss_history], label="max", lw=1, color="#c44")
    ax.plot(iterations, [t[2] for t in loss_history], label="mean", lw=2, color="#333")
    ax.plot(iterations, [t[3] for t in loss_history], label="min", lw=1, color="#4a4")
    ax.fill_between(
        iterations,
        [t[3] for t in loss_history],
        [t[1] for t in loss_history],
        alpha=0.15,
        color="#888",
    )
    ax.set_xlabel("iteration")
    ax.set_ylabel("candidate loss (1 - accuracy)")
    ax.set_title("population loss per search iteration")
    ax.legend(loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
