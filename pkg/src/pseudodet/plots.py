"""Figures rendered next to the delimited report outputs.

Everything draws through the Agg backend straight to files; figures are
byte-deterministic for identical inputs.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

_MAX_CLASS_PANELS = 11


def _bin_edges(config: Mapping) -> np.ndarray:
    return np.linspace(config["lo"], config["hi"], int(config["n_bins"]) + 1)


def _draw_hist(ax, config: Mapping, counts: Sequence[int], tau: float | None, title: str) -> None:
    edges = _bin_edges(config)
    ax.bar(edges[:-1], counts, width=np.diff(edges), align="edge", color="#4878b0", edgecolor="white")
    if tau is not None:
        ax.axvline(tau, color="#d65f5f", linewidth=1.5, label=f"tau = {tau:.3f}")
        ax.legend(fontsize=8)
    ax.set_title(title, fontsize=9)
    ax.set_xlim(config["lo"], config["hi"])


def save_histogram_figure(report: Mapping, path: str | Path) -> None:
    """Pooled and per-class score histograms from a threshold report."""
    classes = report.get("classes", {})
    keys = sorted(classes, key=int)[:_MAX_CLASS_PANELS]
    n_panels = 1 + len(keys)
    n_cols = min(3, n_panels)
    n_rows = (n_panels + n_cols - 1) // n_cols
    fig, axes = plt.subplots(n_rows, n_cols, figsize=(4 * n_cols, 2.8 * n_rows), squeeze=False)
    flat = axes.ravel()

    _draw_hist(flat[0], report["config"], report["pooled"]["counts"],
               report.get("uniform_tau"), "all classes")
    for ax, key in zip(flat[1:], keys):
        entry = classes[key]
        _draw_hist(ax, report["config"], entry["counts"], entry.get("tau"), f"class {key}")
    for ax in flat[n_panels:]:
        ax.axis("off")
    fig.suptitle(f"candidate score histograms ({report['mode']} mode)", fontsize=11)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_iteration_figure(rows: Sequence[Mapping], path: str | Path) -> None:
    """Pseudo-label and stage F1 across loop iterations."""
    its = [r["iteration"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(its, [r["pseudo_f1"] for r in rows], "o-", label="pseudo-label F1")
    ax.plot(its, [r["student_f1"] for r in rows], "s-", label="student F1")
    ax.plot(its, [r["refined_f1"] for r in rows], "^-", label="refined F1")
    ax.set_xlabel("iteration")
    ax.set_ylabel("F1")
    ax.set_xticks(its)
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_sweep_figure(rows: Sequence[Mapping], path: str | Path) -> None:
    """Fixed-threshold F1 bars with the adaptive threshold as a reference line."""
    fixed = [r for r in rows if r["label"] != "ground"]
    ground = next((r for r in rows if r["label"] == "ground"), None)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar([r["label"] for r in fixed], [r["f1"] for r in fixed], color="#4878b0", label="fixed tau")
    if ground is not None:
        ax.axhline(ground["f1"], color="#d65f5f", linewidth=1.5,
                   label=f"ground threshold (F1 = {ground['f1']:.3f})")
    ax.set_xlabel("threshold")
    ax.set_ylabel("pseudo-label F1")
    ax.set_ylim(0, 1.05)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_pr_figure(curves: Mapping[int, tuple[np.ndarray, np.ndarray]], iou_t: float,
                   path: str | Path) -> None:
    """Per-class precision/recall curves at one IoU threshold."""
    fig, ax = plt.subplots(figsize=(5.5, 4.5))
    for class_id in sorted(curves):
        recall, precision = curves[class_id]
        if len(recall):
            ax.plot(recall, precision, label=f"class {class_id}")
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    ax.set_xlim(0, 1.0)
    ax.set_ylim(0, 1.05)
    ax.grid(alpha=0.3)
    ax.set_title(f"precision/recall at IoU {iou_t:.2f}")
    if curves:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
