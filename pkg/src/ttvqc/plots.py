"""Figure rendering for experiment artifacts.

Each renderer takes the experiment's result rows and writes a PNG next to
the delimited output.  Figures are a presentation layer over the CSVs: the
CSVs stay the artifacts of record."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "render_maxcut",
    "render_vqe",
    "render_classify",
    "render_variance_scaling",
    "render_ntk_compare",
]

_TT_COLOR = "#1f77b4"
_DIRECT_COLOR = "#d62728"


def _new_axes(width=6.0, height=3.8):
    fig, ax = plt.subplots(figsize=(width, height))
    ax.grid(True, alpha=0.3, linewidth=0.5)
    return fig, ax


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_maxcut(rows, path):
    idx = np.arange(len(rows))
    direct = [r["h_direct"] for r in rows]
    tt = [r["h_tt"] for r in rows]
    best = [r.get("best_cut") for r in rows]
    fig, ax = _new_axes(7.0, 3.8)
    width = 0.38
    ax.bar(idx - width / 2, direct, width, label="direct", color=_DIRECT_COLOR, alpha=0.85)
    ax.bar(idx + width / 2, tt, width, label="TT-generated", color=_TT_COLOR, alpha=0.85)
    if all(b is not None for b in best):
        ax.plot(idx, best, "k_", markersize=14, label="optimal cut")
    ax.set_xlabel("graph instance")
    ax.set_ylabel(r"final $\langle H_\mathrm{cut} \rangle$")
    ax.set_xticks(idx)
    ax.legend(frameon=False, fontsize=9)
    return _save(fig, path)


def render_vqe(rows, exact_energy, path):
    seeds = [r["seed_index"] for r in rows]
    fig, ax = _new_axes()
    ax.plot(seeds, [r["error_direct"] for r in rows], "o-", color=_DIRECT_COLOR, label="direct")
    ax.plot(seeds, [r["error_tt"] for r in rows], "s-", color=_TT_COLOR, label="TT-generated")
    ax.set_yscale("log")
    ax.set_xlabel("seed")
    ax.set_ylabel("energy error vs exact (abs)")
    ax.set_title(f"exact ground energy {exact_energy:.6f}", fontsize=10)
    ax.legend(frameon=False, fontsize=9)
    # log scale needs positive values
    low = min(min(abs(r["error_direct"]) for r in rows), min(abs(r["error_tt"]) for r in rows))
    if low <= 0:
        ax.set_yscale("linear")
    return _save(fig, path)


def render_classify(rows, path):
    fig, ax = _new_axes()
    for arm, color in (("tt", _TT_COLOR), ("direct", _DIRECT_COLOR)):
        arm_rows = [r for r in rows if r["arm"] == arm]
        if not arm_rows:
            continue
        epochs = [r["epoch"] for r in arm_rows]
        ax.plot(epochs, [r["train_acc"] for r in arm_rows], "--", color=color, alpha=0.6,
                label=f"{arm} train")
        ax.plot(epochs, [r["test_acc"] for r in arm_rows], "-", color=color,
                label=f"{arm} test")
    ax.set_xlabel("epoch")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.legend(frameon=False, fontsize=9)
    return _save(fig, path)


def render_variance_scaling(rows, path):
    us = [r["U"] for r in rows]
    fig, ax = _new_axes()
    ax.loglog(us, [r["var_tt_empirical"] for r in rows], "o-", color=_TT_COLOR,
              label="TT-core gradients (empirical)")
    ax.loglog(us, [r["var_tt_analytic"] for r in rows], "k--", alpha=0.7,
              label=r"analytic $\sigma^2/3U$")
    ax.loglog(us, [r["var_direct"] for r in rows], "s-", color=_DIRECT_COLOR,
              label="direct parameters")
    ax.set_xlabel("qubits U")
    ax.set_ylabel("noise variance of gradient")
    ax.set_xticks(us)
    ax.set_xticklabels([str(u) for u in us])
    ax.legend(frameon=False, fontsize=9)
    return _save(fig, path)


def render_ntk_compare(rows, path):
    fig, axes = plt.subplots(1, 2, figsize=(8.5, 3.8))
    seeds = [r["seed"] for r in rows]
    axes[0].plot(seeds, [r["lambda_min_tt"] for r in rows], "s-", color=_TT_COLOR, label="TT")
    axes[0].plot(seeds, [r["lambda_min_direct"] for r in rows], "o-", color=_DIRECT_COLOR,
                 label="direct")
    axes[0].set_xlabel("seed")
    axes[0].set_ylabel(r"$\lambda_{\min}$ of kernel")
    axes[0].legend(frameon=False, fontsize=9)
    axes[0].grid(True, alpha=0.3, linewidth=0.5)
    axes[1].plot(seeds, [r["trace_tt"] for r in rows], "s-", color=_TT_COLOR, label="TT")
    axes[1].plot(seeds, [r["trace_direct"] for r in rows], "o-", color=_DIRECT_COLOR,
                 label="direct")
    axes[1].set_xlabel("seed")
    axes[1].set_ylabel("kernel trace")
    axes[1].legend(frameon=False, fontsize=9)
    axes[1].grid(True, alpha=0.3, linewidth=0.5)
    return _save(fig, path)
