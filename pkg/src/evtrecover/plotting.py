"""Figures for evaluation reports (matplotlib, non-interactive backend)."""

from __future__ import annotations

from pathlib import Path
from typing import List

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import EvaluationReport  # noqa: E402

# no timestamps or version strings, so identical reports give identical files
_PNG_METADATA = {"Software": None}


def _grouped_bars(ax, groups: List[str], series: dict, ylabel: str) -> None:
    n = max(1, len(series))
    width = 0.8 / n
    for i, (name, values) in enumerate(series.items()):
        xs = [g + (i - (n - 1) / 2) * width for g in range(len(groups))]
        ax.bar(xs, values, width, label=name)
    ax.set_xticks(range(len(groups)))
    ax.set_xticklabels(groups, rotation=15)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize="small")


def plot_success_rates(report: EvaluationReport, path) -> Path:
    res = {(r["variant"], r["scenario"]): r for r in report.results()}
    series = {v: [res[(v, s)]["SR"] for s in report.scenarios] for v in report.variants}
    fig, ax = plt.subplots(figsize=(8, 4.5))
    _grouped_bars(ax, report.scenarios, series, "success rate")
    ax.set_ylim(0, 1.05)
    ax.set_title("Success rate by scenario and variant")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
    return Path(path)


def plot_recovery(report: EvaluationReport, path) -> Path:
    rows = {(r["variant"], r["scenario"]): r for r in report.recovery()}
    variants = [v for v in report.variants if v != "no_recovery"] or report.variants
    series = {v: [rows[(v, s)]["success_rate"] or 0.0 for s in report.scenarios] for v in variants}
    fig, ax = plt.subplots(figsize=(8, 4.5))
    _grouped_bars(ax, report.scenarios, series, "recovery success rate")
    ax.set_ylim(0, 1.05)
    ax.set_title("Recovery success rate (successful / attempted recoveries)")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
    return Path(path)


def write_figures(report: EvaluationReport, report_path) -> List[Path]:
    """Write the figures next to ``report_path``; returns the written paths."""
    stem = Path(report_path).with_suffix("")
    return [plot_success_rates(report, Path(f"{stem}_sr.png")),
            plot_recovery(report, Path(f"{stem}_recovery.png"))]
