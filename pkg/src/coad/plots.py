"""Figure rendering for the CLI report paths.

Each function writes one PNG next to the delimited output it illustrates.
The Agg backend is forced so rendering works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

DPI = 150


def _save(fig, path) -> None:
    fig.savefig(str(path), dpi=DPI, bbox_inches="tight")
    plt.close(fig)


def plot_frontier(points, path, title="Precision-recall frontier") -> None:
    """Unsupervised frontier, plus the supervised curve of the same pairs."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    r_hat = [p.r_hat for p in points]
    p_hat = [p.p_hat for p in points]
    ax.plot(r_hat, p_hat, "o-", ms=3, lw=1.2, label="unsup. train / unsup. test")
    if points and points[0].r is not None:
        ax.plot([p.r for p in points], [p.p for p in points], "s--", ms=3, lw=1.2,
                label="unsup. train / sup. test")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_title(title)
    ax.set_xlim(-0.02, 1.02)
    ax.set_ylim(-0.02, 1.02)
    ax.grid(alpha=0.3)
    ax.legend(loc="lower left", fontsize=8)
    _save(fig, path)


def plot_scan_heatmap(result, path) -> None:
    """Unsupervised score over the cutoff grid, best pair marked."""
    fig, ax = plt.subplots(figsize=(5.5, 4.4))
    vals = np.where(result.feasible, result.fbeta, np.nan)
    mesh = ax.pcolormesh(result.tau_q, result.tau_s, vals, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="score")
    ax.plot([result.best.tau_q], [result.best.tau_s], "r*", ms=12,
            label=f"best ({result.best.tau_s:.3g}, {result.best.tau_q:.3g})")
    ax.set_xlabel("tau_q")
    ax.set_ylabel("tau_s")
    ax.set_title(f"threshold scan (beta={result.params.beta:g})")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)


def plot_history(history, path) -> None:
    fig, ax1 = plt.subplots(figsize=(5.5, 4.0))
    epochs = [e.epoch for e in history.epochs]
    ax1.plot(epochs, [e.train_loss for e in history.epochs], "-", color="tab:blue",
             label="train loss")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss", color="tab:blue")
    ax2 = ax1.twinx()
    ax2.plot(epochs, [e.val_fbeta for e in history.epochs], "-", color="tab:orange",
             label="validation score")
    ax2.set_ylabel("validation score", color="tab:orange")
    if history.best_epoch >= 0:
        ax2.axvline(history.best_epoch, color="gray", ls=":", lw=1, label="best epoch")
    ax1.set_title("training history")
    _save(fig, path)


def plot_labeling_regimes(model, alpha, regimes, path, beta_min=None, beta_max=None) -> None:
    """Score of each labeling against beta, with argmax regime boundaries."""
    from itertools import product

    from .metric import fbeta_hat_moments

    lo = beta_min or regimes[0].beta_lo
    hi = beta_max or regimes[-1].beta_hi
    betas = np.geomspace(lo, hi, 300)
    fig, ax = plt.subplots(figsize=(6.0, 4.2))
    for bits in product((0, 1), repeat=3):
        labeling = (0,) + bits
        mu_s, _, mu_sq = model.moments(labeling)
        if mu_s > 0.5 or mu_sq == 0.0:
            continue
        ys = [fbeta_hat_moments(mu_s, mu_s, mu_sq, beta=float(b), alpha=alpha) for b in betas]
        ax.plot(betas, ys, lw=1.1, label="".join(str(v) for v in labeling))
    for reg in regimes[:-1]:
        ax.axvline(reg.beta_hi, color="gray", ls=":", lw=1)
    ax.set_xscale("log")
    ax.set_xlabel("beta")
    ax.set_ylabel("score")
    ax.set_title("labeling scores and argmax regimes")
    ax.legend(fontsize=7, ncol=2)
    _save(fig, path)
