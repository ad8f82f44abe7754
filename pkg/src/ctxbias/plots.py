"""Figure rendering for evaluation reports.

Figures are written next to the delimited report output: a WER heatmap
over the (lambda, alpha) grid and, when several reports are rendered
together, WER-vs-lambda curves per alpha.
"""

from __future__ import annotations

import csv
from typing import Sequence, TextIO

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from ctxbias.evaluation import EvalReport


def write_grid_csv(report: EvalReport, sink: TextIO) -> None:
    """One row per (lambda, alpha) cell, mirroring the grid layout."""
    writer = csv.writer(sink)
    writer.writerow(
        ["lambda", "alpha", "wer", "substitutions", "insertions", "deletions", "reference_length"]
    )
    for c in report.cells:
        agg = c.aggregate
        writer.writerow(
            [c.lam, c.alpha, f"{agg.wer:.6f}", agg.substitutions, agg.insertions,
             agg.deletions, agg.reference_length]
        )


def render_grid_figure(report: EvalReport, path: str) -> None:
    """WER(%) heatmap, alpha rows by lambda columns."""
    lambdas = sorted({c.lam for c in report.cells})
    alphas = sorted({c.alpha for c in report.cells})
    grid = np.full((len(alphas), len(lambdas)), np.nan)
    for c in report.cells:
        grid[alphas.index(c.alpha), lambdas.index(c.lam)] = 100.0 * c.aggregate.wer
    fig, ax = plt.subplots(figsize=(1.6 + 1.1 * len(lambdas), 1.2 + 0.9 * len(alphas)))
    im = ax.imshow(grid, cmap="viridis_r", aspect="auto")
    ax.set_xticks(range(len(lambdas)), [f"{v:g}" for v in lambdas])
    ax.set_yticks(range(len(alphas)), [f"{v:g}" for v in alphas])
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel(r"$\alpha$")
    ax.set_title(f"WER (%) — {report.condition}, {report.scheme} scheme")
    for i in range(len(alphas)):
        for j in range(len(lambdas)):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.2f}", ha="center", va="center",
                        color="white", fontsize=9)
    fig.colorbar(im, ax=ax, shrink=0.85)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_lambda_curves(report: EvalReport, path: str) -> None:
    """WER vs lambda, one curve per alpha; baseline as a dashed line."""
    alphas = sorted({c.alpha for c in report.cells})
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    for alpha in alphas:
        cells = sorted((c for c in report.cells if c.alpha == alpha), key=lambda c: c.lam)
        ax.plot(
            [c.lam for c in cells],
            [100.0 * c.aggregate.wer for c in cells],
            marker="o",
            label=rf"$\alpha$ = {alpha:g}",
        )
    ax.axhline(100.0 * report.baseline.wer, ls="--", color="gray", label="baseline")
    ax.set_xlabel(r"$\lambda$")
    ax.set_ylabel("WER (%)")
    ax.set_title(f"{report.condition}, {report.scheme} scheme")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_condition_comparison(
    reports: Sequence[EvalReport], labels: Sequence[str], path: str
) -> None:
    """Bar chart of aggregate WER for the first cell of several reports."""
    fig, ax = plt.subplots(figsize=(1.5 + 0.9 * len(reports), 3.8))
    wers = [100.0 * r.cells[0].aggregate.wer for r in reports]
    ax.bar(range(len(reports)), wers, color="steelblue")
    ax.set_xticks(range(len(reports)), labels, rotation=30, ha="right")
    ax.set_ylabel("WER (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
