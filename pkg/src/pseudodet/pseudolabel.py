"""Pseudo-label selection, confidence weighting, and dataset merging.

Candidates whose score clears their class threshold become pseudo-labels;
images left with nothing are dropped from the pseudo set entirely.  Each
kept label carries a weight in [0, 1] that grows linearly from 0 at the
threshold to 1 at a perfect score, so a downstream trainer can damp the
loss contribution of uncertain labels without this toolkit knowing
anything about losses.  Ground-truth annotations weigh 1 (their score is
implicitly perfect).
"""

from __future__ import annotations

from typing import Mapping, NamedTuple, Sequence

from .dataio import (
    SOURCE_GT,
    SOURCE_PSEUDO,
    Annotation,
    Dataset,
    IntegrityError,
)
from .nms import Detection
from .thresholding import ThresholdSet


class InvalidThresholdPairError(ValueError):
    """The low threshold is not strictly below the high threshold."""


class DuplicateImageIdError(IntegrityError):
    """Labeled and pseudo-labeled image id sets intersect."""


class PseudoLabel(NamedTuple):
    """A kept detection plus its weight and the threshold that admitted it."""

    detection: Detection
    alpha: float
    source_tau: float


def alpha_weight(s: float, tau: float) -> float:
    """Confidence weight (s - tau) / (1 - tau), clamped to the unit cases.

    Scores below the threshold weigh 1: that branch exists for labels whose
    score is implicitly perfect (ground truth), not for surviving
    pseudo-labels.  A degenerate tau of 1 also weighs 1, the continuous
    limit at s = 1.
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"score must be in [0, 1], got {s}")
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {tau}")
    if s < tau or tau >= 1.0:
        return 1.0
    return (s - tau) / (1.0 - tau)


def alpha_weight_general(s: float, tau_l: float, tau_h: float) -> float:
    """Two-threshold weight: linear ramp on [tau_l, tau_h), 1 elsewhere.

    Fixing tau_h = 1 recovers alpha_weight for every score below 1.
    """
    if not tau_l < tau_h:
        raise InvalidThresholdPairError(f"need tau_l < tau_h, got {tau_l} >= {tau_h}")
    if not (0.0 <= tau_l and tau_h <= 1.0):
        raise ValueError(f"thresholds must be in [0, 1], got ({tau_l}, {tau_h})")
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"score must be in [0, 1], got {s}")
    if tau_l <= s < tau_h:
        return (s - tau_l) / (tau_h - tau_l)
    return 1.0


def filter_candidates(
    candidates: Mapping[int, Sequence[Detection]],
    ts: ThresholdSet,
) -> dict[int, list[Detection]]:
    """Keep detections with score >= their class threshold.

    Images whose surviving list is empty are removed from the map, so the
    result only contains images that still have at least one label.
    Classes recorded as empty upstream contribute nothing; a class with no
    threshold entry at all raises MissingClassThresholdError.
    """
    out: dict[int, list[Detection]] = {}
    for image_id in sorted(candidates):
        kept = []
        for det in candidates[image_id]:
            tau = ts.tau_for(det.class_id)
            if tau is not None and det.score >= tau:
                kept.append(det)
        if kept:
            out[image_id] = kept
    return out


def emit_pseudo_dataset(
    filtered: Mapping[int, Sequence[Detection]],
    ts: ThresholdSet,
    *,
    weighted: bool = True,
) -> list[tuple[int, list[PseudoLabel]]]:
    """Attach weights to filtered detections, ordered by image id.

    With ``weighted`` off every label gets weight 1 (the ablation switch).
    """
    entries: list[tuple[int, list[PseudoLabel]]] = []
    for image_id in sorted(filtered):
        labels = []
        for det in filtered[image_id]:
            tau = ts.tau_for(det.class_id)
            if tau is None:
                raise AssertionError(f"filtered detection of class {det.class_id} has no threshold")
            alpha = alpha_weight(det.score, tau) if weighted else 1.0
            labels.append(PseudoLabel(det, alpha, tau))
        entries.append((image_id, labels))
    return entries


def build_pseudo_dataset(
    entries: Sequence[tuple[int, Sequence[PseudoLabel]]],
    pool: Dataset,
    start_ann_id: int = 1,
) -> Dataset:
    """Materialize pseudo-label entries as a dataset document.

    Image metadata comes from the unlabeled pool; annotation ids are
    assigned sequentially from ``start_ann_id`` so a later merge with the
    labeled set keeps ids unique without renumbering.
    """
    image_map = pool.image_map()
    images = []
    annotations = []
    next_id = start_ann_id
    for image_id, labels in sorted(entries, key=lambda e: e[0]):
        if image_id not in image_map:
            raise IntegrityError(f"pseudo entry references missing pool image id {image_id}")
        if not labels:
            raise ValueError(f"pseudo image {image_id} has no labels; drop it before emitting")
        images.append(image_map[image_id])
        for pl in labels:
            det = pl.detection
            annotations.append(
                Annotation(
                    id=next_id,
                    image_id=image_id,
                    category_id=det.class_id,
                    box=det.box,
                    score=det.score,
                    alpha=pl.alpha,
                    source=SOURCE_PSEUDO,
                )
            )
            next_id += 1
    return Dataset(images=images, annotations=annotations, categories=list(pool.categories))


def merge_datasets(labeled: Dataset, pseudo: Dataset) -> Dataset:
    """Union of the labeled set and the pseudo-labeled set.

    Ground-truth annotations come out weighted 1 and tagged "gt"; pseudo
    annotations keep their weight and "pseudo" tag, purely for auditing.
    Image id sets must be disjoint and annotation ids unique.
    """
    labeled_ids = {im.id for im in labeled.images}
    overlap = labeled_ids & {im.id for im in pseudo.images}
    if overlap:
        raise DuplicateImageIdError(
            f"labeled and pseudo image ids intersect: {sorted(overlap)[:5]}"
        )
    ann_ids = [a.id for a in labeled.annotations] + [a.id for a in pseudo.annotations]
    if len(set(ann_ids)) != len(ann_ids):
        raise IntegrityError("annotation ids collide between labeled and pseudo sets")

    categories = {c.id: c for c in labeled.categories}
    for c in pseudo.categories:
        if c.id in categories and categories[c.id].name != c.name:
            raise IntegrityError(f"category {c.id} named differently in the two sets")
        categories.setdefault(c.id, c)

    annotations = [
        Annotation(a.id, a.image_id, a.category_id, a.box, a.score, 1.0, SOURCE_GT)
        for a in labeled.annotations
    ]
    for a in pseudo.annotations:
        if a.source != SOURCE_PSEUDO:
            raise IntegrityError(f"annotation {a.id} in the pseudo set is not tagged '{SOURCE_PSEUDO}'")
        annotations.append(a)

    return Dataset(
        images=list(labeled.images) + list(pseudo.images),
        annotations=annotations,
        categories=sorted(categories.values(), key=lambda c: c.id),
    )


def split_merged(merged: Dataset) -> tuple[Dataset, Dataset]:
    """Invert merge_datasets using the provenance tag.

    The recovered labeled set has the merge-added weight and tag stripped
    back off; the pseudo set keeps them.
    """
    gt_anns = []
    pseudo_anns = []
    for a in merged.annotations:
        if a.source == SOURCE_GT:
            gt_anns.append(Annotation(a.id, a.image_id, a.category_id, a.box, a.score, None, None))
        elif a.source == SOURCE_PSEUDO:
            pseudo_anns.append(a)
        else:
            raise IntegrityError(f"annotation {a.id} has no provenance tag; not a merged dataset")
    # Every pseudo image has at least one label; labeled images may have none.
    pseudo_image_ids = {a.image_id for a in pseudo_anns}
    labeled_images = [im for im in merged.images if im.id not in pseudo_image_ids]
    pseudo_images = [im for im in merged.images if im.id in pseudo_image_ids]
    categories = list(merged.categories)
    return (
        Dataset(images=labeled_images, annotations=gt_anns, categories=categories),
        Dataset(images=pseudo_images, annotations=pseudo_anns, categories=list(categories)),
    )


def bundle_counts(
    n_labeled: int,
    n_unlabeled: int,
    n_candidate_images: int,
    n_pseudo_images: int,
) -> dict[str, int]:
    """Dataset cardinalities with their ordering invariant enforced."""
    if not n_pseudo_images <= n_candidate_images <= n_unlabeled:
        raise ValueError(
            f"expected N_p <= N_c <= N_u, got {n_pseudo_images} / {n_candidate_images} / {n_unlabeled}"
        )
    return {
        "n_labeled": n_labeled,
        "n_unlabeled": n_unlabeled,
        "n_candidate_images": n_candidate_images,
        "n_pseudo_images": n_pseudo_images,
    }
