"""Synthetic scenes plus a statistical detector stand-in for loop studies.

No network is trained anywhere here.  Scenes are random boxes with known
classes; the "detector" detects each ground-truth object with a
configurable probability, jitters the box, scores true positives from a
high-skewed Beta and false positives from a low-skewed one, and emits
per-view predictions in each view's own frame.  An improvement model maps
measured pseudo-label quality to the next iteration's detector
parameters, standing in for student training; it is a documented modeling
assumption, not a claim about how real training behaves.

All randomness is drawn from streams keyed by (seed, purpose, image,
view), never by iteration or worker.  Runs are therefore reproducible for
any worker count, and paired comparisons (more views vs fewer, refined
vs student, iteration k+1 vs k) share their random draws: a model that is
better parameter-wise detects a superset of objects and emits a subset of
false positives, so directional comparisons are not washed out by
resampling noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping, Sequence

import numpy as np

from .dataio import Annotation, Category, ConfigError, Dataset, ImageInfo
from .evaluation import annotations_to_groundtruth, match_dataset, pr_f1
from .geometry import Box, ViewSpec, apply_view, DEFAULT_VIEWS, IDENTITY_VIEW
from .nms import Detection, ViewPredictions, aggregate_views, nms
from .pseudolabel import emit_pseudo_dataset, filter_candidates
from .thresholding import (
    EmptyHistogramError,
    HistogramConfig,
    MODE_CLASS_WISE,
    ThresholdSet,
    compute_thresholds,
)

_STREAM_SCENE = 0
_STREAM_DETECT = 1
_STREAM_FALSE_POS = 2

_VIEW_STREAM_KEY = {"identity": 0, "hflip": 1, "scale": 2, "hflip_scale": 3}


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(key)


def _poisson_icdf(u: float, lam: float) -> int:
    """Smallest k with Poisson(lam) CDF >= u; monotone in lam at fixed u."""
    if lam <= 0.0:
        return 0
    p = math.exp(-lam)
    cdf = p
    k = 0
    while cdf < u and k < 10_000:
        k += 1
        p *= lam / k
        cdf += p
    return k


@dataclass(frozen=True)
class SceneConfig:
    """Random-scene layout: image size, object counts, classes, box sizes.

    Object side lengths are log-uniform; a configurable fraction of
    objects is forced small (sides below ``small_size``) so that
    view-dependent recall has something to act on.
    """

    width: float = 640.0
    height: float = 480.0
    objects_min: int = 1
    objects_max: int = 6
    n_classes: int = 3
    class_weights: tuple[float, ...] | None = None
    size_lo: float = 16.0
    size_hi: float = 160.0
    small_size: float = 32.0
    small_fraction: float = 0.3

    def __post_init__(self) -> None:
        if not (self.width > 0 and self.height > 0):
            raise ValueError("image dims must be positive")
        if not 0 <= self.objects_min <= self.objects_max:
            raise ValueError("need 0 <= objects_min <= objects_max")
        if self.n_classes < 1:
            raise ValueError("need at least one class")
        if not 0.0 < self.size_lo <= self.small_size <= self.size_hi:
            raise ValueError("need 0 < size_lo <= small_size <= size_hi")
        if not 0.0 <= self.small_fraction <= 1.0:
            raise ValueError("small_fraction must be in [0, 1]")
        if self.class_weights is not None:
            if len(self.class_weights) != self.n_classes:
                raise ValueError("class_weights length must equal n_classes")
            if any(w < 0 for w in self.class_weights):
                raise ValueError("class_weights must be non-negative")
            if abs(sum(self.class_weights) - 1.0) > 1e-9:
                raise ValueError("class_weights must sum to 1")

    @property
    def weights(self) -> np.ndarray:
        if self.class_weights is None:
            return np.full(self.n_classes, 1.0 / self.n_classes)
        return np.asarray(self.class_weights, dtype=np.float64)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SceneConfig":
        return _dataclass_from_dict(cls, doc, "scene")


@dataclass(frozen=True)
class DetectorModel:
    """Statistical detector: recall, false positives, noise, score model.

    Small objects (area below ``small_area``) are detected at a reduced
    rate except in upscaled views, which largely restores them.  True
    positives score high (Beta skewed toward 1, optionally sharpened),
    false positives score low with a tail reaching into the confident
    range; pooled over a candidate run this yields the U-shaped score
    histogram the ground threshold expects.  Classes listed in
    ``hard_classes`` score from a low-mode Beta instead, producing the
    monotone-decreasing histogram that defeats per-class thresholding.
    """

    recall: float = 0.45
    recall_by_class: Mapping[int, float] | None = None
    small_recall_factor: float = 0.35
    scale_small_recall_factor: float = 0.9
    small_area: float = 1024.0
    fp_rate: float = 4.5
    loc_noise: float = 3.0
    tp_score_a: float = 7.0
    tp_score_b: float = 0.7
    fp_score_a: float = 1.2
    fp_score_b: float = 6.0
    hard_classes: tuple[int, ...] = ()
    hard_score_a: float = 2.0
    hard_score_b: float = 4.0
    score_sharpen: float = 0.0

    def __post_init__(self) -> None:
        for name in ("recall", "small_recall_factor", "scale_small_recall_factor"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.fp_rate < 0 or self.loc_noise < 0 or self.score_sharpen < 0:
            raise ValueError("fp_rate, loc_noise, and score_sharpen must be non-negative")
        for name in ("tp_score_a", "tp_score_b", "fp_score_a", "fp_score_b",
                     "hard_score_a", "hard_score_b"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def base_recall(self, class_id: int) -> float:
        if self.recall_by_class is not None and class_id in self.recall_by_class:
            return self.recall_by_class[class_id]
        return self.recall

    def effective_recall(self, class_id: int, is_small: bool, view_kind: str) -> float:
        r = self.base_recall(class_id)
        if is_small:
            if view_kind in ("scale", "hflip_scale"):
                r *= self.scale_small_recall_factor
            else:
                r *= self.small_recall_factor
        return min(max(r, 0.0), 1.0)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "DetectorModel":
        doc = dict(doc)
        if "recall_by_class" in doc and doc["recall_by_class"] is not None:
            doc["recall_by_class"] = {int(k): float(v) for k, v in doc["recall_by_class"].items()}
        if "hard_classes" in doc:
            doc["hard_classes"] = tuple(int(c) for c in doc["hard_classes"])
        return _dataclass_from_dict(cls, doc, "detector")


@dataclass(frozen=True)
class ImprovementModel:
    """Maps pseudo-label F1 to the next detector, plus the refinement bonus.

    Better pseudo-labels close part of the remaining recall gap and shrink
    the false-positive rate and localization noise; refinement adds a
    small recall bump and sharpens score calibration.  All updates are
    monotone: a higher F1 never yields a worse detector.
    """

    recall_gain: float = 0.4
    fp_shrink: float = 0.4
    noise_shrink: float = 0.3
    refine_recall_bonus: float = 0.04
    refine_sharpen_bonus: float = 0.3

    def __post_init__(self) -> None:
        for name in ("recall_gain", "fp_shrink", "noise_shrink", "refine_recall_bonus"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.refine_sharpen_bonus < 0:
            raise ValueError("refine_sharpen_bonus must be non-negative")

    @classmethod
    def identity(cls) -> "ImprovementModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "ImprovementModel":
        return _dataclass_from_dict(cls, doc, "improvement")

    def update(self, model: DetectorModel, f1: float) -> DetectorModel:
        f1 = min(max(f1, 0.0), 1.0)
        lift = self.recall_gain * f1
        by_class = model.recall_by_class
        if by_class is not None:
            by_class = {c: r + lift * (1.0 - r) for c, r in by_class.items()}
        return replace(
            model,
            recall=model.recall + lift * (1.0 - model.recall),
            recall_by_class=by_class,
            fp_rate=model.fp_rate * (1.0 - self.fp_shrink * f1),
            loc_noise=model.loc_noise * (1.0 - self.noise_shrink * f1),
        )

    def refine(self, model: DetectorModel) -> DetectorModel:
        bonus = self.refine_recall_bonus
        by_class = model.recall_by_class
        if by_class is not None:
            by_class = {c: r + bonus * (1.0 - r) for c, r in by_class.items()}
        return replace(
            model,
            recall=model.recall + bonus * (1.0 - model.recall),
            recall_by_class=by_class,
            score_sharpen=model.score_sharpen + self.refine_sharpen_bonus,
        )


def _dataclass_from_dict(cls, doc: Mapping[str, Any], what: str):
    known = set(cls.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown {what} keys: {sorted(unknown)}")
    kwargs = dict(doc)
    for key, value in kwargs.items():
        if isinstance(value, list):
            kwargs[key] = tuple(value)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"bad {what} config: {exc}") from exc


# ---------------------------------------------------------------------------
# Scene generation


def generate_scenes(
    cfg: SceneConfig,
    n: int,
    seed: int,
    *,
    start_image_id: int = 1,
    file_prefix: str = "synthetic",
) -> Dataset:
    """Draw ``n`` random scenes as a ground-truth dataset.

    Deterministic for a given seed: every image derives its own stream
    from (seed, image id), so generation order does not matter.
    """
    if n <= 0:
        raise ValueError(f"need n > 0, got {n}")
    weights = cfg.weights
    images: list[ImageInfo] = []
    annotations: list[Annotation] = []
    ann_id = 1
    for i in range(n):
        image_id = start_image_id + i
        rng = _rng(seed, _STREAM_SCENE, image_id)
        images.append(
            ImageInfo(image_id, cfg.width, cfg.height, f"{file_prefix}_{image_id:06d}.png")
        )
        n_obj = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
        for _ in range(n_obj):
            class_id = 1 + int(rng.choice(cfg.n_classes, p=weights))
            is_small = bool(rng.random() < cfg.small_fraction)
            if is_small:
                side = math.exp(rng.uniform(math.log(cfg.size_lo), math.log(cfg.small_size)))
            else:
                side = math.exp(rng.uniform(math.log(cfg.small_size), math.log(cfg.size_hi)))
            aspect = math.exp(rng.uniform(math.log(0.5), math.log(2.0)))
            w = min(side * math.sqrt(aspect), cfg.width)
            h = min(side / math.sqrt(aspect), cfg.height)
            cx = rng.uniform(w / 2.0, cfg.width - w / 2.0)
            cy = rng.uniform(h / 2.0, cfg.height - h / 2.0)
            annotations.append(
                Annotation(
                    id=ann_id,
                    image_id=image_id,
                    category_id=class_id,
                    box=Box(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0),
                )
            )
            ann_id += 1
    categories = [Category(k, f"class_{k}") for k in range(1, cfg.n_classes + 1)]
    return Dataset(images=images, annotations=annotations, categories=categories)


# ---------------------------------------------------------------------------
# Detector simulation


def _jittered(box: Box, dx1: float, dy1: float, dx2: float, dy2: float) -> Box:
    x_lo, x_hi = sorted((box.x1 + dx1, box.x2 + dx2))
    y_lo, y_hi = sorted((box.y1 + dy1, box.y2 + dy2))
    if x_hi - x_lo < 1e-6:
        x_hi = x_lo + 1e-6
    if y_hi - y_lo < 1e-6:
        y_hi = y_lo + 1e-6
    return Box(x_lo, y_lo, x_hi, y_hi)


def simulate_detector(
    gt: Dataset,
    model: DetectorModel,
    views: Sequence[ViewSpec],
    seed: int,
) -> dict[int, list[ViewPredictions]]:
    """Simulate per-view detector output over a ground-truth dataset.

    Every view of every image uses its own derived stream, and the number
    of draws never depends on the model parameters, so two models compared
    under the same seed see exactly the same underlying randomness.
    """
    if not views:
        raise ValueError("need at least one view")
    cat_ids = gt.category_ids() or [1]
    anns_by_image = gt.annotations_by_image()
    sharpen_exp = 1.0 / (1.0 + model.score_sharpen)

    out: dict[int, list[ViewPredictions]] = {}
    for image in sorted(gt.images, key=lambda im: im.id):
        dims = image.dims
        objs = anns_by_image.get(image.id, [])
        n = len(objs)
        small = [o.box.area < model.small_area for o in objs]
        per_view: list[ViewPredictions] = []
        for view in views:
            vkey = _VIEW_STREAM_KEY[view.kind]
            rng = _rng(seed, _STREAM_DETECT, image.id, vkey)
            u_det = rng.random(n)
            z = rng.standard_normal((n, 4))
            base_scores = rng.beta(model.tp_score_a, model.tp_score_b, n)
            hard_scores = rng.beta(model.hard_score_a, model.hard_score_b, n)

            dets: list[Detection] = []
            for j, obj in enumerate(objs):
                r = model.effective_recall(obj.category_id, small[j], view.kind)
                if u_det[j] >= r:
                    continue
                raw = hard_scores[j] if obj.category_id in model.hard_classes else base_scores[j]
                score = float(raw**sharpen_exp) if model.score_sharpen > 0 else float(raw)
                s = model.loc_noise
                box = _jittered(obj.box, s * z[j, 0], s * z[j, 1], s * z[j, 2], s * z[j, 3])
                dets.append(Detection(obj.category_id, apply_view(box, view, dims), score))

            rng_fp = _rng(seed, _STREAM_FALSE_POS, image.id, vkey)
            n_fp = _poisson_icdf(float(rng_fp.random()), model.fp_rate)
            fp_side_hi = max(16.0, min(dims) / 2.0)
            for _ in range(n_fp):
                cx = rng_fp.random() * dims.width
                cy = rng_fp.random() * dims.height
                side = math.exp(rng_fp.uniform(math.log(8.0), math.log(fp_side_hi)))
                aspect = math.exp(rng_fp.uniform(math.log(0.5), math.log(2.0)))
                class_id = cat_ids[int(rng_fp.random() * len(cat_ids)) % len(cat_ids)]
                fp_score = float(rng_fp.beta(model.fp_score_a, model.fp_score_b))
                w = side * math.sqrt(aspect)
                h = side / math.sqrt(aspect)
                x1 = min(max(cx - w / 2.0, 0.0), dims.width - 1.0)
                y1 = min(max(cy - h / 2.0, 0.0), dims.height - 1.0)
                box = Box(x1, y1, min(x1 + w, dims.width), min(y1 + h, dims.height))
                dets.append(Detection(class_id, apply_view(box, view, dims), fp_score))

            per_view.append(ViewPredictions(view, tuple(dets)))
        out[image.id] = per_view
    return out


def candidates_for_model(
    gt: Dataset,
    model: DetectorModel,
    views: Sequence[ViewSpec],
    seed: int,
    nms_iou: float = 0.5,
    *,
    class_wise: bool = True,
) -> dict[int, list[Detection]]:
    """Simulate, aggregate across views, and drop images left with nothing."""
    preds = simulate_detector(gt, model, views, seed)
    image_map = gt.image_map()
    out: dict[int, list[Detection]] = {}
    for image_id in sorted(preds):
        dets = aggregate_views(
            preds[image_id], image_map[image_id].dims, nms_iou, class_wise=class_wise
        )
        if dets:
            out[image_id] = dets
    return out


def candidate_recall(
    gt: Dataset,
    model: DetectorModel,
    views: Sequence[ViewSpec],
    seed: int,
    nms_iou: float = 0.5,
    match_iou: float = 0.5,
) -> float:
    """Fraction of ground-truth objects matched by the candidate set."""
    cands = candidates_for_model(gt, model, views, seed, nms_iou)
    gts = annotations_to_groundtruth(gt.annotations)
    _, recall, _ = pr_f1(match_dataset(cands, gts, match_iou))
    return recall


def detector_quality(
    gt: Dataset,
    model: DetectorModel,
    seed: int,
    nms_iou: float = 0.5,
    match_iou: float = 0.5,
) -> tuple[float, float, float]:
    """Single-view detector precision/recall/F1 against hidden ground truth."""
    preds = simulate_detector(gt, model, (IDENTITY_VIEW,), seed)
    dets = {
        image_id: nms(vps[0].detections, nms_iou)
        for image_id, vps in preds.items()
        if vps[0].detections
    }
    gts = annotations_to_groundtruth(gt.annotations)
    return pr_f1(match_dataset(dets, gts, match_iou))


# ---------------------------------------------------------------------------
# Iterative loop


@dataclass(frozen=True)
class IterationReport:
    """Metrics for one self-training iteration: labels, then both stages."""

    iteration: int
    n_candidate_images: int
    n_candidates: int
    n_pseudo_images: int
    n_pseudo_labels: int
    uniform_tau: float | None
    tau_by_class: Mapping[int, float]
    pseudo_precision: float
    pseudo_recall: float
    pseudo_f1: float
    student_precision: float
    student_recall: float
    student_f1: float
    refined_precision: float
    refined_recall: float
    refined_f1: float

    def as_dict(self) -> dict[str, Any]:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["tau_by_class"] = {str(c): t for c, t in sorted(dict(self.tau_by_class).items())}
        return d


def run_iteration_loop(
    gt_labeled: Dataset,
    gt_unlabeled: Dataset,
    model: DetectorModel,
    improvement: ImprovementModel,
    iterations: int,
    *,
    views: Sequence[ViewSpec] = DEFAULT_VIEWS,
    nms_iou: float = 0.5,
    histogram: HistogramConfig = HistogramConfig(),
    mode: str = MODE_CLASS_WISE,
    seed: int = 0,
    weighted: bool = True,
) -> list[IterationReport]:
    """Run the pseudo-label / improve / refine loop for ``iterations`` rounds.

    Per round: the current teacher labels the unlabeled pool under all
    views, candidates are aggregated and thresholded, pseudo-labels are
    scored against the pool's hidden ground truth, the improvement model
    produces the student and then the refined student, and the refined
    student becomes the next teacher.  Student and refined-stage quality
    is measured on the same pool with a single view.  A round with zero
    pseudo-labels is reported, not fatal.
    """
    if iterations < 1:
        raise ValueError(f"need iterations >= 1, got {iterations}")
    del gt_labeled  # the simulated teacher stands in for training on it
    gts_by_image = annotations_to_groundtruth(gt_unlabeled.annotations)

    reports: list[IterationReport] = []
    teacher = model
    for it in range(1, iterations + 1):
        candidates = candidates_for_model(gt_unlabeled, teacher, views, seed, nms_iou)
        all_cands = [d for dets in candidates.values() for d in dets]
        ts: ThresholdSet | None
        try:
            ts = compute_thresholds(all_cands, histogram, mode)
        except EmptyHistogramError:
            ts = None
        filtered = filter_candidates(candidates, ts) if ts is not None else {}
        entries = emit_pseudo_dataset(filtered, ts, weighted=weighted) if ts is not None else []

        precision, recall, f1 = pr_f1(match_dataset(filtered, gts_by_image, 0.5))
        if not filtered:
            precision = recall = f1 = 0.0

        student = improvement.update(teacher, f1)
        refined = improvement.refine(student)
        sp, sr, sf = detector_quality(gt_unlabeled, student, seed, nms_iou)
        rp, rr, rf = detector_quality(gt_unlabeled, refined, seed, nms_iou)

        reports.append(
            IterationReport(
                iteration=it,
                n_candidate_images=len(candidates),
                n_candidates=len(all_cands),
                n_pseudo_images=len(filtered),
                n_pseudo_labels=sum(len(labels) for _, labels in entries),
                uniform_tau=ts.uniform_tau if ts is not None else None,
                tau_by_class=dict(ts.per_class) if ts is not None else {},
                pseudo_precision=precision,
                pseudo_recall=recall,
                pseudo_f1=f1,
                student_precision=sp,
                student_recall=sr,
                student_f1=sf,
                refined_precision=rp,
                refined_recall=rr,
                refined_f1=rf,
            )
        )
        teacher = refined
    return reports


# ---------------------------------------------------------------------------
# Threshold sweep


@dataclass(frozen=True)
class SweepResult:
    """Pseudo-label quality for one thresholding strategy."""

    label: str
    tau: float | None
    n_pseudo_images: int
    n_pseudo_labels: int
    precision: float
    recall: float
    f1: float

    def as_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def _pseudo_quality(candidates, ts, gts_by_image) -> SweepResult:
    filtered = filter_candidates(candidates, ts)
    precision, recall, f1 = pr_f1(match_dataset(filtered, gts_by_image, 0.5))
    if not filtered:
        precision = recall = f1 = 0.0
    return SweepResult(
        label="",
        tau=None,
        n_pseudo_images=len(filtered),
        n_pseudo_labels=sum(len(v) for v in filtered.values()),
        precision=precision,
        recall=recall,
        f1=f1,
    )


def run_threshold_sweep(
    gt_unlabeled: Dataset,
    model: DetectorModel,
    taus: Sequence[float],
    *,
    views: Sequence[ViewSpec] = DEFAULT_VIEWS,
    nms_iou: float = 0.5,
    histogram: HistogramConfig = HistogramConfig(),
    mode: str = MODE_CLASS_WISE,
    seed: int = 0,
) -> list[SweepResult]:
    """Compare the adaptive threshold against fixed uniform values.

    One candidate set is generated, then filtered once per strategy, so
    the comparison is paired exactly.
    """
    candidates = candidates_for_model(gt_unlabeled, model, views, seed, nms_iou)
    all_cands = [d for dets in candidates.values() for d in dets]
    gts_by_image = annotations_to_groundtruth(gt_unlabeled.annotations)

    results: list[SweepResult] = []
    ts = compute_thresholds(all_cands, histogram, mode)
    ground = _pseudo_quality(candidates, ts, gts_by_image)
    results.append(replace(ground, label="ground", tau=ts.uniform_tau))
    for tau in taus:
        fixed = ThresholdSet(
            mode="uniform", config=histogram, uniform_tau=float(tau), per_class={}
        )
        row = _pseudo_quality(candidates, fixed, gts_by_image)
        results.append(replace(row, label=f"{tau:g}", tau=float(tau)))
    return results


# ---------------------------------------------------------------------------
# Config plumbing


@dataclass(frozen=True)
class SimulationSpec:
    """Full simulate-command settings parsed from the config document."""

    n_labeled: int = 50
    n_unlabeled: int = 300
    iterations: int = 3
    scene: SceneConfig = field(default_factory=SceneConfig)
    detector: DetectorModel = field(default_factory=DetectorModel)
    improvement: ImprovementModel = field(default_factory=ImprovementModel)

    def __post_init__(self) -> None:
        if self.n_labeled < 0 or self.n_unlabeled < 1:
            raise ValueError("need n_labeled >= 0 and n_unlabeled >= 1")
        if self.iterations < 1:
            raise ValueError("need iterations >= 1")

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SimulationSpec":
        known = {"n_labeled", "n_unlabeled", "iterations", "scene", "detector", "improvement"}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown simulator keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = dict(doc)
        if "scene" in kwargs:
            kwargs["scene"] = SceneConfig.from_dict(kwargs["scene"])
        if "detector" in kwargs:
            kwargs["detector"] = DetectorModel.from_dict(kwargs["detector"])
        if "improvement" in kwargs:
            kwargs["improvement"] = ImprovementModel.from_dict(kwargs["improvement"])
        try:
            return cls(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"bad simulator config: {exc}") from exc

    def make_pools(self, seed: int) -> tuple[Dataset, Dataset]:
        """Generate disjoint labeled and unlabeled ground-truth pools."""
        labeled = generate_scenes(
            self.scene, max(self.n_labeled, 1), seed, start_image_id=1, file_prefix="labeled"
        )
        if self.n_labeled == 0:
            labeled = Dataset(categories=labeled.categories)
        unlabeled = generate_scenes(
            self.scene,
            self.n_unlabeled,
            seed,
            start_image_id=self.n_labeled + 1,
            file_prefix="unlabeled",
        )
        return labeled, unlabeled
