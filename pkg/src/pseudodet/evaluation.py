"""Detection-vs-ground-truth matching and metrics.

Matching is greedy in descending score order: a detection is a true
positive iff it shares the class of a not-yet-matched ground-truth box
and overlaps it at or above the IoU threshold (best IoU wins, ties going
to the lowest ground-truth index).  Average precision uses the
101-point-interpolated area under the precision/recall curve, averaged
over an IoU grid and then over classes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .geometry import Box, iou
from .nms import Detection

DEFAULT_IOU_SET = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))

_RECALL_LEVELS = np.linspace(0.0, 1.0, 101)


class GroundTruth(NamedTuple):
    class_id: int
    box: Box


def _rank_key(d: Detection):
    return (-d.score, d.class_id, d.box.x1, d.box.y1, d.box.x2, d.box.y2)


@dataclass(frozen=True)
class MatchResult:
    """Outcome of matching one detection list against one ground-truth list."""

    tp: int
    fp: int
    fn: int
    detections: tuple[Detection, ...]   # canonical descending-score order
    det_is_tp: tuple[bool, ...]
    gt_matched: tuple[bool, ...]        # aligned with the input ground-truth order


def match(
    dets: Sequence[Detection],
    gts: Sequence[GroundTruth],
    iou_t: float,
) -> MatchResult:
    if not 0.0 < iou_t < 1.0:
        raise ValueError(f"iou threshold must be in (0, 1), got {iou_t}")
    ordered = sorted(dets, key=_rank_key)
    matched = [False] * len(gts)
    flags: list[bool] = []
    for d in ordered:
        best_iou = 0.0
        best_j = -1
        for j, g in enumerate(gts):
            if matched[j] or g.class_id != d.class_id:
                continue
            v = iou(d.box, g.box)
            if v >= iou_t and v > best_iou:  # strict > keeps the lowest index on ties
                best_iou = v
                best_j = j
        if best_j >= 0:
            matched[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    tp = sum(flags)
    return MatchResult(
        tp=tp,
        fp=len(ordered) - tp,
        fn=len(gts) - tp,
        detections=tuple(ordered),
        det_is_tp=tuple(flags),
        gt_matched=tuple(matched),
    )


def match_dataset(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gts_by_image: Mapping[int, Sequence[GroundTruth]],
    iou_t: float,
) -> MatchResult:
    """Per-image matching aggregated over a whole dataset."""
    tp = fp = fn = 0
    detections: list[Detection] = []
    det_is_tp: list[bool] = []
    gt_matched: list[bool] = []
    for image_id in sorted(set(dets_by_image) | set(gts_by_image)):
        mr = match(dets_by_image.get(image_id, ()), gts_by_image.get(image_id, ()), iou_t)
        tp += mr.tp
        fp += mr.fp
        fn += mr.fn
        detections.extend(mr.detections)
        det_is_tp.extend(mr.det_is_tp)
        gt_matched.extend(mr.gt_matched)
    return MatchResult(tp, fp, fn, tuple(detections), tuple(det_is_tp), tuple(gt_matched))


def pr_f1(mr: MatchResult) -> tuple[float, float, float]:
    """Precision, recall, and F1; empty denominators count as perfect."""
    precision = mr.tp / (mr.tp + mr.fp) if (mr.tp + mr.fp) else 1.0
    recall = mr.tp / (mr.tp + mr.fn) if (mr.tp + mr.fn) else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) else 0.0
    return precision, recall, f1


@dataclass(frozen=True)
class ApReport:
    per_class: dict[int, float]
    mean_ap: float
    classes_without_gt: tuple[int, ...]
    iou_thresholds: tuple[float, ...]


def _class_match_records(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gts_by_image: Mapping[int, Sequence[GroundTruth]],
    class_id: int,
    iou_t: float,
) -> tuple[list[tuple[tuple, bool]], int]:
    """Per-image greedy matching for one class; records carry a global rank key."""
    records: list[tuple[tuple, bool]] = []
    n_gt = 0
    for image_id in sorted(set(dets_by_image) | set(gts_by_image)):
        gts = [g for g in gts_by_image.get(image_id, ()) if g.class_id == class_id]
        dets = [d for d in dets_by_image.get(image_id, ()) if d.class_id == class_id]
        n_gt += len(gts)
        mr = match(dets, gts, iou_t)
        for d, is_tp in zip(mr.detections, mr.det_is_tp):
            records.append(((-d.score, image_id, d.box.x1, d.box.y1, d.box.x2, d.box.y2), is_tp))
    return records, n_gt


def _interpolated_ap(tp_flags: np.ndarray, n_gt: int) -> float:
    if n_gt == 0:
        raise ValueError("AP is undefined without ground truth")
    if tp_flags.size == 0:
        return 0.0
    cum_tp = np.cumsum(tp_flags)
    cum_fp = np.cumsum(~tp_flags)
    recall = cum_tp / n_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # Precision envelope: best precision achievable at or beyond each rank.
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    idx = np.searchsorted(recall, _RECALL_LEVELS, side="left")
    interp = np.where(idx < recall.size, envelope[np.minimum(idx, recall.size - 1)], 0.0)
    return float(interp.mean())


def average_precision(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gts_by_image: Mapping[int, Sequence[GroundTruth]],
    iou_set: Sequence[float] | None = None,
) -> ApReport:
    """Per-class AP averaged over an IoU grid, plus the mean over classes.

    Classes that never occur in the ground truth have no defined AP; they
    are excluded from the mean and listed separately.
    """
    ious = tuple(iou_set) if iou_set is not None else DEFAULT_IOU_SET
    gt_classes = {g.class_id for gts in gts_by_image.values() for g in gts}
    det_classes = {d.class_id for dets in dets_by_image.values() for d in dets}

    per_class: dict[int, float] = {}
    for class_id in sorted(gt_classes):
        ap_values = []
        for iou_t in ious:
            records, n_gt = _class_match_records(dets_by_image, gts_by_image, class_id, iou_t)
            records.sort(key=lambda r: r[0])
            flags = np.array([is_tp for _, is_tp in records], dtype=bool)
            ap_values.append(_interpolated_ap(flags, n_gt))
        per_class[class_id] = float(np.mean(ap_values))

    mean_ap = float(np.mean(list(per_class.values()))) if per_class else 0.0
    return ApReport(
        per_class=per_class,
        mean_ap=mean_ap,
        classes_without_gt=tuple(sorted(det_classes - gt_classes)),
        iou_thresholds=ious,
    )


def pr_curve(
    dets_by_image: Mapping[int, Sequence[Detection]],
    gts_by_image: Mapping[int, Sequence[GroundTruth]],
    class_id: int,
    iou_t: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Raw recall/precision points for one class at one IoU, rank-ordered."""
    records, n_gt = _class_match_records(dets_by_image, gts_by_image, class_id, iou_t)
    records.sort(key=lambda r: r[0])
    flags = np.array([is_tp for _, is_tp in records], dtype=bool)
    if flags.size == 0 or n_gt == 0:
        return np.zeros(0), np.zeros(0)
    cum_tp = np.cumsum(flags)
    cum_fp = np.cumsum(~flags)
    return cum_tp / n_gt, cum_tp / (cum_tp + cum_fp)


def annotations_to_groundtruth(annotations) -> dict[int, list[GroundTruth]]:
    """Group dataset annotations as ground truth keyed by image id."""
    out: dict[int, list[GroundTruth]] = {}
    for ann in annotations:
        out.setdefault(ann.image_id, []).append(GroundTruth(ann.category_id, ann.box))
    return out


def annotations_to_detections(annotations, default_score: float = 1.0) -> dict[int, list[Detection]]:
    """Group score-carrying annotations as detections keyed by image id."""
    out: dict[int, list[Detection]] = {}
    for ann in annotations:
        score = ann.score if ann.score is not None else default_score
        out.setdefault(ann.image_id, []).append(Detection(ann.category_id, ann.box, score))
    return out
