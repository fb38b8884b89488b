"""Score histograms and the adaptive "ground" threshold.

The ground threshold is the lower edge of the least-populated histogram
bin over a high-confidence score range (default [0.5, 1.0], 21 bins).
Candidate score distributions are typically U-shaped there: a false-positive
hump near the low end and a true-positive hump near 1.0, with the valley
between them marking a good cutoff.  The heuristic needs no labeled data,
so it can be computed per class at no extra cost.

When a class is hard for the detector, its histogram can be monotonically
decreasing instead of U-shaped; the minimum then sits in the last bin and
the resulting per-class threshold is very high.  Uniform mode (one pooled
histogram for all classes) sidesteps this at the cost of per-class
adaptivity; both modes are supported.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .nms import Detection

MODE_UNIFORM = "uniform"
MODE_CLASS_WISE = "class-wise"
MODES = (MODE_UNIFORM, MODE_CLASS_WISE)


class EmptyHistogramError(ValueError):
    """Every bin is empty: no threshold can be derived."""


class MissingClassThresholdError(KeyError):
    """A candidate's class has no threshold entry (upstream histogram gap)."""


@dataclass(frozen=True)
class HistogramConfig:
    """Score range and bin count for threshold histograms."""

    lo: float = 0.5
    hi: float = 1.0
    n_bins: int = 21

    def __post_init__(self) -> None:
        if not self.lo < self.hi:
            raise ValueError(f"histogram range must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.n_bins < 2:
            raise ValueError(f"need at least 2 bins, got {self.n_bins}")

    @property
    def bin_width(self) -> float:
        return (self.hi - self.lo) / self.n_bins

    def lower_edge(self, k: int) -> float:
        return self.lo + k * (self.hi - self.lo) / self.n_bins


@dataclass(frozen=True)
class ScoreHistogram:
    """Binned score counts plus the number of scores that fell below ``lo``."""

    config: HistogramConfig
    counts: tuple[int, ...]
    n_below: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts)


def build_histogram(scores: Iterable[float], cfg: HistogramConfig) -> ScoreHistogram:
    """Bin scores into ``cfg.n_bins`` half-open bins over [lo, hi).

    The last bin is closed at ``hi`` so a score of exactly 1.0 is counted.
    Scores below ``lo`` are excluded from the bins and only tallied in
    ``n_below``; scores above ``hi`` are ignored entirely.
    """
    arr = np.asarray(list(scores), dtype=np.float64)
    counts = np.zeros(cfg.n_bins, dtype=np.int64)
    n_below = 0
    if arr.size:
        n_below = int(np.count_nonzero(arr < cfg.lo))
        in_range = arr[(arr >= cfg.lo) & (arr <= cfg.hi)]
        if in_range.size:
            idx = np.floor(
                (in_range - cfg.lo) / (cfg.hi - cfg.lo) * cfg.n_bins
            ).astype(np.int64)
            np.clip(idx, 0, cfg.n_bins - 1, out=idx)
            # scores sitting exactly on a bin edge must land in that bin even
            # when the division above rounded the quotient across it
            edges = cfg.lo + np.arange(cfg.n_bins + 1) * (cfg.hi - cfg.lo) / cfg.n_bins
            idx = np.where(in_range < edges[idx], idx - 1, idx)
            idx = np.where(
                (idx < cfg.n_bins - 1) & (in_range >= edges[idx + 1]), idx + 1, idx
            )
            np.add.at(counts, idx, 1)
    return ScoreHistogram(cfg, tuple(int(c) for c in counts), n_below)


def ground_threshold(h: ScoreHistogram) -> float:
    """Lower edge of the least-populated bin, ties broken toward the lowest bin.

    Raises EmptyHistogramError when no score was binned at all.
    """
    if h.total == 0:
        raise EmptyHistogramError("all histogram bins are empty, no threshold can be derived")
    k = int(np.argmin(h.counts))  # argmin keeps the leftmost minimum
    return h.config.lower_edge(k)


@dataclass(frozen=True)
class ThresholdSet:
    """Thresholds derived from candidate scores, uniform or per class.

    ``per_class`` holds a threshold for every class with at least one
    binned score; classes whose candidates all fell below the histogram
    range are listed in ``empty_classes`` and yield no pseudo-labels.
    Per-class histograms are retained for reporting in both modes.
    """

    mode: str
    config: HistogramConfig
    uniform_tau: float | None
    per_class: Mapping[int, float]
    empty_classes: frozenset[int] = frozenset()
    class_histograms: Mapping[int, ScoreHistogram] = field(default_factory=dict)
    pooled_histogram: ScoreHistogram | None = None

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == MODE_UNIFORM and self.uniform_tau is None:
            raise ValueError("uniform mode requires a pooled threshold")

    def tau_for(self, class_id: int) -> float | None:
        """Threshold applied to a class; None when the class yields nothing.

        Raises MissingClassThresholdError in class-wise mode for classes that
        were never seen upstream (as opposed to seen-but-unbinnable ones).
        """
        if self.mode == MODE_UNIFORM:
            return self.uniform_tau
        tau = self.per_class.get(class_id)
        if tau is None:
            if class_id in self.empty_classes:
                return None
            raise MissingClassThresholdError(class_id)
        return tau


def compute_thresholds(
    candidates: Sequence[Detection],
    cfg: HistogramConfig,
    mode: str = MODE_CLASS_WISE,
) -> ThresholdSet:
    """Derive a ThresholdSet from candidate detections.

    Uniform mode pools every score into one histogram; class-wise mode
    thresholds each class on its own histogram.  A class whose scores all
    fall below the range is recorded as empty rather than failing the run.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == MODE_UNIFORM and not candidates:
        raise EmptyHistogramError("no candidates to derive a uniform threshold from")

    pooled = build_histogram((d.score for d in candidates), cfg)
    try:
        uniform_tau: float | None = ground_threshold(pooled)
    except EmptyHistogramError:
        if mode == MODE_UNIFORM:
            raise
        uniform_tau = None

    by_class: dict[int, list[float]] = {}
    for d in candidates:
        by_class.setdefault(d.class_id, []).append(d.score)

    per_class: dict[int, float] = {}
    empty: set[int] = set()
    class_histograms: dict[int, ScoreHistogram] = {}
    for class_id in sorted(by_class):
        hist = build_histogram(by_class[class_id], cfg)
        class_histograms[class_id] = hist
        try:
            per_class[class_id] = ground_threshold(hist)
        except EmptyHistogramError:
            empty.add(class_id)

    return ThresholdSet(
        mode=mode,
        config=cfg,
        uniform_tau=uniform_tau,
        per_class=per_class,
        empty_classes=frozenset(empty),
        class_histograms=class_histograms,
        pooled_histogram=pooled,
    )


def threshold_report(ts: ThresholdSet) -> dict:
    """Structured report: mode, config, pooled and per-class histograms."""
    classes = {}
    for class_id, hist in sorted(ts.class_histograms.items()):
        classes[str(class_id)] = {
            "tau": ts.per_class.get(class_id),
            "counts": list(hist.counts),
            "n_below": hist.n_below,
        }
    pooled = ts.pooled_histogram
    return {
        "mode": ts.mode,
        "config": {"lo": ts.config.lo, "hi": ts.config.hi, "n_bins": ts.config.n_bins},
        "uniform_tau": ts.uniform_tau,
        "pooled": {
            "counts": list(pooled.counts) if pooled else [],
            "n_below": pooled.n_below if pooled else 0,
        },
        "classes": classes,
    }


def threshold_set_from_report(report: dict) -> ThresholdSet:
    """Rebuild a ThresholdSet from its report document.

    Thresholds are recomputed from the stored integer counts rather than
    parsed back from the rounded tau fields, so a save/load cycle never
    loses precision.
    """
    cfg_d = report["config"]
    cfg = HistogramConfig(lo=cfg_d["lo"], hi=cfg_d["hi"], n_bins=cfg_d["n_bins"])
    mode = report["mode"]

    pooled = ScoreHistogram(
        cfg,
        tuple(int(c) for c in report["pooled"]["counts"]) or tuple([0] * cfg.n_bins),
        int(report["pooled"]["n_below"]),
    )
    try:
        uniform_tau: float | None = ground_threshold(pooled)
    except EmptyHistogramError:
        uniform_tau = None

    per_class: dict[int, float] = {}
    empty: set[int] = set()
    class_histograms: dict[int, ScoreHistogram] = {}
    for key, entry in report.get("classes", {}).items():
        class_id = int(key)
        hist = ScoreHistogram(cfg, tuple(int(c) for c in entry["counts"]), int(entry["n_below"]))
        class_histograms[class_id] = hist
        try:
            per_class[class_id] = ground_threshold(hist)
        except EmptyHistogramError:
            empty.add(class_id)

    return ThresholdSet(
        mode=mode,
        config=cfg,
        uniform_tau=uniform_tau,
        per_class=per_class,
        empty_classes=frozenset(empty),
        class_histograms=class_histograms,
        pooled_histogram=pooled,
    )
