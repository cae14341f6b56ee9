"""Figure rendering for evaluation reports.

Figures are written straight to files (SVG) next to the CSV tables; the
Agg backend keeps this working on headless machines.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
# reproducible SVG output: stable element ids, no embedded creation date
matplotlib.rcParams["svg.hashsalt"] = "sparseslide"

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

_SVG_METADATA = {"Date": None}

from .metrics import CostCurve, SlideEvalStats, nhg_moments  # noqa: E402

_MAG_COLORS = {2.5: "#9467bd", 5.0: "#d62728", 10.0: "#2ca02c", 20.0: "#ff7f0e", 40.0: "#1f77b4"}


def _color(magnification: float) -> str:
    return _MAG_COLORS.get(magnification, "#7f7f7f")


def plot_cost_curves(
    curves: Mapping[tuple[float, str], CostCurve],
    path,
    thresholds: Mapping[str, float] | None = None,
) -> None:
    """Mean metric vs. sampling budget, one panel per metric.

    ``curves`` maps (magnification, metric) to a curve; the shaded band
    is +/- one replicate SD. Threshold lines show the quality targets
    the budget tables are derived from.
    """
    metrics = sorted({metric for _, metric in curves})
    fig, axes = plt.subplots(1, len(metrics), figsize=(6.0 * len(metrics), 4.2), squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        for (mag, m), curve in sorted(curves.items()):
            if m != metric:
                continue
            ns = curve.budgets
            means = [p.mean for p in curve.points]
            lo = [p.mean - p.sd for p in curve.points]
            hi = [p.mean + p.sd for p in curve.points]
            color = _color(mag)
            ax.plot(ns, means, color=color, lw=1.5, label=f"{mag:g}x")
            ax.fill_between(ns, lo, hi, color=color, alpha=0.2, lw=0)
        if thresholds and metric in thresholds:
            ax.axhline(thresholds[metric], color="black", ls="--", lw=0.8, alpha=0.6)
        ax.set_xlabel("patches sampled per slide")
        ax.set_ylabel(metric.upper())
        ax.set_ylim(0.0, 1.02)
        ax.legend(loc="lower right", fontsize=8)
        ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)


def plot_ttd(stats_by_mag: Mapping[float, Sequence[SlideEvalStats]], path) -> None:
    """Per-slide mean time to detection against the oracle expectation.

    One panel per magnification: measured per-slide mean +/- SD next to
    the closed-form sampling-only expectation for that slide's patch
    counts. Slides whose trials all failed are drawn as crosses at 0.
    """
    mags = sorted(stats_by_mag)
    fig, axes = plt.subplots(1, len(mags), figsize=(5.2 * len(mags), 4.0), squeeze=False)
    for ax, mag in zip(axes[0], mags):
        stats = list(stats_by_mag[mag])
        xs = range(len(stats))
        for x, s in zip(xs, stats):
            mean, var = nhg_moments(s.total_patches, s.positive_patches)
            ax.errorbar(
                [x - 0.15], [mean], yerr=[var**0.5], fmt="o", ms=3, color="#999999",
                elinewidth=0.8, capsize=2,
            )
            if s.ttd_mean is not None:
                ax.errorbar(
                    [x + 0.15], [s.ttd_mean], yerr=[s.ttd_sd], fmt="o", ms=3,
                    color=_color(mag), elinewidth=0.8, capsize=2,
                )
            else:
                ax.plot([x + 0.15], [0.0], marker="x", ms=5, color="#d62728")
        ax.set_title(f"{mag:g}x")
        ax.set_xlabel("positive slide")
        ax.set_ylabel("patches before detection")
        ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_SVG_METADATA)
    plt.close(fig)
