"""Non-maximum suppression and multi-view candidate aggregation.

Suppression is greedy and (by default) class-wise: detections never have
their score or coordinates altered, the output is purely a selection.
Aggregation maps every view's predictions back to the original frame,
suppresses within each view, then suppresses once more across views, so
the merged candidates are a mix of the views with the top score winning
any overlap.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

from .geometry import Box, ImageDims, ViewSpec, invert_view


class Detection(NamedTuple):
    """One predicted object: category, box (original frame), confidence."""

    class_id: int
    box: Box
    score: float


@dataclass(frozen=True)
class ViewPredictions:
    """A single view's raw detections, expressed in the view's own frame."""

    view: ViewSpec
    detections: tuple[Detection, ...]


def _sort_key(d: Detection):
    # canonical order: class, score descending, then coordinates
    return (d.class_id, -d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2)


def _greedy_keep(group: list[Detection], iou_threshold: float) -> list[Detection]:
    # Inner loop works on plain floats; this path sees ~1e5 boxes per run.
    group.sort(key=_sort_key)
    kept: list[Detection] = []
    kept_boxes: list[tuple[float, float, float, float, float]] = []  # x1,y1,x2,y2,area
    for det in group:
        bx1, by1, bx2, by2 = det.box
        barea = (bx2 - bx1) * (by2 - by1)
        suppressed = False
        for kx1, ky1, kx2, ky2, karea in kept_boxes:
            ix1 = bx1 if bx1 > kx1 else kx1
            iy1 = by1 if by1 > ky1 else ky1
            ix2 = bx2 if bx2 < kx2 else kx2
            iy2 = by2 if by2 < ky2 else ky2
            iw = ix2 - ix1
            if iw <= 0.0:
                continue
            ih = iy2 - iy1
            if ih <= 0.0:
                continue
            inter = iw * ih
            if inter / (barea + karea - inter) >= iou_threshold:
                suppressed = True
                break
        if not suppressed:
            kept.append(det)
            kept_boxes.append((bx1, by1, bx2, by2, barea))
    return kept


def nms(
    dets: Sequence[Detection],
    iou_threshold: float,
    *,
    class_wise: bool = True,
) -> list[Detection]:
    """Greedy non-maximum suppression.

    Per class (or across all classes when ``class_wise`` is False), sort by
    score descending and keep a detection iff its IoU with every
    already-kept detection is below ``iou_threshold``.  Score ties break on
    box coordinates so the result is identical for any input ordering.
    """
    if not 0.0 < iou_threshold < 1.0:
        raise ValueError(f"iou_threshold must be in (0, 1), got {iou_threshold}")
    if not dets:
        return []
    if class_wise:
        groups: dict[int, list[Detection]] = {}
        for d in dets:
            groups.setdefault(d.class_id, []).append(d)
        kept: list[Detection] = []
        for class_id in sorted(groups):
            kept.extend(_greedy_keep(groups[class_id], iou_threshold))
    else:
        kept = _greedy_keep(list(dets), iou_threshold)
        kept.sort(key=_sort_key)
    return kept


def aggregate_views(
    per_view: Iterable[ViewPredictions],
    dims: ImageDims,
    iou_threshold: float,
    *,
    class_wise: bool = True,
) -> list[Detection]:
    """Merge one image's per-view predictions into candidate labels.

    Each view's detections are mapped back to the original frame with the
    inverse view transform and suppressed on their own; the survivors of
    all views are then concatenated and suppressed once more.
    """
    pooled: list[Detection] = []
    for vp in per_view:
        view = vp.view
        if view.kind == "identity":
            inverted = list(vp.detections)
        else:
            inverted = [
                Detection(d.class_id, invert_view(d.box, view, dims), d.score)
                for d in vp.detections
            ]
        pooled.extend(nms(inverted, iou_threshold, class_wise=class_wise))
    return nms(pooled, iou_threshold, class_wise=class_wise)
