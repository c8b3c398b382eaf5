"""Figure rendering for report outputs.

Each CLI report path can emit a PNG next to its delimited output; all
functions take already-computed records and write a file.
"""
from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_risk_curve(assessments: Sequence, path: str | Path,
                    threshold: float) -> None:
    """Attacker success probability vs block depth, with bounds if present."""
    depths = [a.depth for a in assessments]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(depths, [a.probability_point for a in assessments],
            marker="o", label="point estimate", color="tab:green")
    if assessments and assessments[0].probability_worst is not None:
        ax.plot(depths, [a.probability_worst for a in assessments],
                marker="^", label="worst case", color="tab:red")
        ax.plot(depths, [a.probability_best for a in assessments],
                marker="v", label="best case", color="tab:blue")
    ax.axhline(threshold, ls="--", color="gray",
               label=f"threshold {threshold:g}")
    ax.set_yscale("log")
    ax.set_xlabel("block depth")
    ax.set_ylabel("double-spend success probability")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_depth_cdf(cdf: Sequence[tuple[int, float]], path: str | Path,
                   threshold: float) -> None:
    """Empirical CDF of depths required to clear the risk threshold."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if cdf:
        xs, ys = zip(*cdf)
        ax.step(xs, ys, where="post")
    ax.set_xlabel(f"depth to reach {threshold:g} success probability")
    ax.set_ylabel("fraction of blocks")
    ax.set_ylim(0, 1.02)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def plot_rate_estimates(rows: Sequence[dict], path: str | Path) -> None:
    """Per-miner rate estimates with bound whiskers when available."""
    labels = [r["miner"] for r in rows]
    rates = [r["rate_point"] for r in rows]
    fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(rows)), 4))
    xs = range(len(rows))
    ax.bar(xs, rates, color="tab:blue", alpha=0.7)
    if any(r.get("rate_low") is not None for r in rows):
        lo = [r["rate_point"] - (r.get("rate_low") or r["rate_point"])
              for r in rows]
        hi = [(r.get("rate_high") or r["rate_point"]) - r["rate_point"]
              for r in rows]
        ax.errorbar(xs, rates, yerr=[lo, hi], fmt="none", ecolor="black",
                    capsize=3)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("hash rate (H/s)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
