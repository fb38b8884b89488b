"""COCO-style dataset and detection-file IO with canonical serialization.

Output JSON is byte-stable: keys are sorted, list order is canonical, and
floats use fixed 6-decimal formatting, so identical in-memory data always
produces identical files regardless of platform or worker count.  Boxes
are converted between the (x, y, w, h) wire form and the internal corner
form here, and clipped to the image bounds only when written.

The ``alpha`` and ``source`` annotation fields are toolkit extensions;
readers that do not know them can ignore them.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .geometry import (
    VIEW_KINDS,
    Box,
    ImageDims,
    ViewSpec,
    clip_box,
    validate_box,
)
from .nms import Detection, ViewPredictions
from .thresholding import MODE_CLASS_WISE, MODES, HistogramConfig

log = logging.getLogger(__name__)

SOURCE_GT = "gt"
SOURCE_PSEUDO = "pseudo"


class ParseError(ValueError):
    """Malformed input document; the message carries location context."""


class IntegrityError(ValueError):
    """Referential integrity violation (dangling or duplicate id)."""


class UnknownViewError(ParseError):
    """A detection record carries an unrecognized view tag."""


class ConfigError(ValueError):
    """Invalid pipeline configuration."""


# ---------------------------------------------------------------------------
# Canonical JSON


def canonical_dumps(obj: Any) -> str:
    """Serialize to JSON with sorted keys and fixed 6-decimal floats."""
    parts: list[str] = []
    _write_canonical(obj, parts)
    return "".join(parts)


def _write_canonical(obj: Any, parts: list[str]) -> None:
    if obj is None:
        parts.append("null")
    elif isinstance(obj, bool):
        parts.append("true" if obj else "false")
    elif isinstance(obj, int):
        parts.append(str(obj))
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"cannot serialize non-finite float {obj!r}")
        parts.append(f"{obj:.6f}")
    elif isinstance(obj, str):
        parts.append(json.dumps(obj))
    elif isinstance(obj, Mapping):
        parts.append("{")
        for i, key in enumerate(sorted(obj)):
            if not isinstance(key, str):
                raise ValueError(f"JSON object keys must be strings, got {key!r}")
            if i:
                parts.append(",")
            parts.append(json.dumps(key))
            parts.append(":")
            _write_canonical(obj[key], parts)
        parts.append("}")
    elif isinstance(obj, (list, tuple)):
        parts.append("[")
        for i, item in enumerate(obj):
            if i:
                parts.append(",")
            _write_canonical(item, parts)
        parts.append("]")
    else:
        raise ValueError(f"cannot serialize {type(obj).__name__} canonically")


def write_json(obj: Any, path: str | Path) -> None:
    Path(path).write_text(canonical_dumps(obj) + "\n", encoding="utf-8")


def read_json(path: str | Path) -> Any:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


# ---------------------------------------------------------------------------
# Dataset model


@dataclass
class ImageInfo:
    id: int
    width: float
    height: float
    file_name: str

    @property
    def dims(self) -> ImageDims:
        return ImageDims(float(self.width), float(self.height))


@dataclass
class Annotation:
    id: int
    image_id: int
    category_id: int
    box: Box
    score: float | None = None
    alpha: float | None = None
    source: str | None = None


@dataclass
class Category:
    id: int
    name: str


@dataclass
class Dataset:
    images: list[ImageInfo] = field(default_factory=list)
    annotations: list[Annotation] = field(default_factory=list)
    categories: list[Category] = field(default_factory=list)

    def image_map(self) -> dict[int, ImageInfo]:
        return {im.id: im for im in self.images}

    def dims_of(self, image_id: int) -> ImageDims:
        return self.image_map()[image_id].dims

    def annotations_by_image(self) -> dict[int, list[Annotation]]:
        out: dict[int, list[Annotation]] = {im.id: [] for im in self.images}
        for ann in self.annotations:
            out[ann.image_id].append(ann)
        return out

    def category_ids(self) -> list[int]:
        return sorted(c.id for c in self.categories)


def bbox_to_box(bbox: Sequence[float], context: str = "bbox") -> Box:
    if len(bbox) != 4:
        raise ParseError(f"{context}: bbox must have 4 entries, got {len(bbox)}")
    x, y, w, h = (float(v) for v in bbox)
    if not (w > 0 and h > 0):
        raise ParseError(f"{context}: bbox width/height must be positive, got w={w}, h={h}")
    box = Box(x, y, x + w, y + h)
    try:
        return validate_box(box)
    except ValueError as exc:
        raise ParseError(f"{context}: {exc}") from exc


def box_to_bbox(box: Box) -> list[float]:
    return [float(box.x1), float(box.y1), float(box.width), float(box.height)]


def _check_unit_interval(value: float, what: str, context: str) -> float:
    value = float(value)
    if not (0.0 <= value <= 1.0 and math.isfinite(value)):
        raise ParseError(f"{context}: {what} must be in [0, 1], got {value}")
    return value


def dataset_from_dict(doc: Mapping[str, Any], origin: str = "<memory>") -> Dataset:
    """Parse and validate a dataset document (ids unique, references resolve)."""
    try:
        images_raw = doc["images"]
        anns_raw = doc["annotations"]
        cats_raw = doc["categories"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{origin}: dataset document needs images/annotations/categories") from exc

    images: list[ImageInfo] = []
    for rec in images_raw:
        ctx = f"{origin}: image id={rec.get('id')!r}"
        if not (rec.get("width", 0) > 0 and rec.get("height", 0) > 0):
            raise ParseError(f"{ctx}: width and height must be positive")
        images.append(ImageInfo(int(rec["id"]), rec["width"], rec["height"], str(rec.get("file_name", ""))))
    image_ids = [im.id for im in images]
    if len(set(image_ids)) != len(image_ids):
        dup = _first_duplicate(image_ids)
        raise IntegrityError(f"{origin}: duplicate image id {dup}")

    categories = [Category(int(rec["id"]), str(rec["name"])) for rec in cats_raw]
    cat_ids = [c.id for c in categories]
    if len(set(cat_ids)) != len(cat_ids):
        raise IntegrityError(f"{origin}: duplicate category id {_first_duplicate(cat_ids)}")

    image_id_set = set(image_ids)
    cat_id_set = set(cat_ids)
    annotations: list[Annotation] = []
    for rec in anns_raw:
        ctx = f"{origin}: annotation id={rec.get('id')!r}"
        ann_id = int(rec["id"])
        image_id = int(rec["image_id"])
        category_id = int(rec["category_id"])
        if image_id not in image_id_set:
            raise IntegrityError(f"{ctx}: references missing image id {image_id}")
        if category_id not in cat_id_set:
            raise IntegrityError(f"{ctx}: references missing category id {category_id}")
        score = rec.get("score")
        alpha = rec.get("alpha")
        source = rec.get("source")
        if score is not None:
            score = _check_unit_interval(score, "score", ctx)
        if alpha is not None:
            alpha = _check_unit_interval(alpha, "alpha", ctx)
        if source is not None and source not in (SOURCE_GT, SOURCE_PSEUDO):
            raise ParseError(f"{ctx}: source must be '{SOURCE_GT}' or '{SOURCE_PSEUDO}', got {source!r}")
        annotations.append(
            Annotation(ann_id, image_id, category_id, bbox_to_box(rec["bbox"], ctx), score, alpha, source)
        )
    ann_ids = [a.id for a in annotations]
    if len(set(ann_ids)) != len(ann_ids):
        raise IntegrityError(f"{origin}: duplicate annotation id {_first_duplicate(ann_ids)}")

    return Dataset(images=images, annotations=annotations, categories=categories)


def _first_duplicate(ids: Sequence[int]) -> int:
    seen: set[int] = set()
    for i in ids:
        if i in seen:
            return i
        seen.add(i)
    raise AssertionError("no duplicate present")


def dataset_to_dict(ds: Dataset, *, clip: bool = True) -> dict[str, Any]:
    """Canonical document form; boxes are clipped to image bounds here.

    Annotations whose box falls entirely outside its image are dropped with
    a warning (an empty clipped box cannot satisfy the positive-area rule).
    """
    image_map = ds.image_map()
    ann_records: list[dict[str, Any]] = []
    for ann in sorted(ds.annotations, key=lambda a: a.id):
        box = ann.box
        if clip:
            clipped = clip_box(box, image_map[ann.image_id].dims)
            if clipped is None:
                log.warning(
                    "dropping annotation %d on image %d: box %s lies outside the image",
                    ann.id, ann.image_id, tuple(box),
                )
                continue
            if clipped != box:
                log.warning("clipped annotation %d box to image bounds", ann.id)
                box = clipped
        rec: dict[str, Any] = {
            "id": ann.id,
            "image_id": ann.image_id,
            "category_id": ann.category_id,
            "bbox": box_to_bbox(box),
        }
        if ann.score is not None:
            rec["score"] = float(ann.score)
        if ann.alpha is not None:
            rec["alpha"] = float(ann.alpha)
        if ann.source is not None:
            rec["source"] = ann.source
        ann_records.append(rec)
    return {
        "images": [
            {"id": im.id, "width": im.width, "height": im.height, "file_name": im.file_name}
            for im in sorted(ds.images, key=lambda im: im.id)
        ],
        "annotations": ann_records,
        "categories": [
            {"id": c.id, "name": c.name} for c in sorted(ds.categories, key=lambda c: c.id)
        ],
    }


def load_dataset(path: str | Path) -> Dataset:
    return dataset_from_dict(read_json(path), origin=str(path))


def save_dataset(ds: Dataset, path: str | Path) -> None:
    write_json(dataset_to_dict(ds), path)


# ---------------------------------------------------------------------------
# Detection files (the detector-exchange contract)


def load_detections(
    path: str | Path,
    dataset: Dataset,
    scale_factor: float = 2.0,
) -> dict[int, list[ViewPredictions]]:
    """Load a detection file, grouped per image and per view.

    Boxes stay in the view frame they were predicted in.  Images with no
    detections at all are simply absent from the result, which removes
    them from the candidate pool.
    """
    doc = read_json(path)
    if not isinstance(doc, list):
        raise ParseError(f"{path}: detection file must be a JSON array of records")
    image_ids = {im.id for im in dataset.images}
    cat_ids = {c.id for c in dataset.categories}

    grouped: dict[int, dict[str, list[Detection]]] = {}
    for i, rec in enumerate(doc):
        ctx = f"{path}: record {i}"
        try:
            image_id = int(rec["image_id"])
            category_id = int(rec["category_id"])
            view_tag = rec["view"]
            score = rec["score"]
            bbox = rec["bbox"]
        except (KeyError, TypeError) as exc:
            raise ParseError(f"{ctx}: missing field {exc}") from exc
        if view_tag not in VIEW_KINDS:
            raise UnknownViewError(f"{ctx}: unknown view {view_tag!r}, expected one of {VIEW_KINDS}")
        if image_id not in image_ids:
            raise IntegrityError(f"{ctx}: references missing image id {image_id}")
        if category_id not in cat_ids:
            raise IntegrityError(f"{ctx}: references missing category id {category_id}")
        score = _check_unit_interval(score, "score", ctx)
        det = Detection(category_id, bbox_to_box(bbox, ctx), score)
        grouped.setdefault(image_id, {}).setdefault(view_tag, []).append(det)

    out: dict[int, list[ViewPredictions]] = {}
    for image_id in sorted(grouped):
        views = []
        for kind in VIEW_KINDS:
            dets = grouped[image_id].get(kind)
            if dets is None:
                continue
            dets.sort(key=lambda d: (d.class_id, -d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2))
            views.append(ViewPredictions(ViewSpec(kind, scale_factor), tuple(dets)))
        out[image_id] = views
    return out


def save_detections(preds: Mapping[int, Sequence[ViewPredictions]], path: str | Path) -> None:
    records = []
    for image_id in sorted(preds):
        for vp in preds[image_id]:
            for d in sorted(
                vp.detections,
                key=lambda d: (d.class_id, -d.score, d.box.x1, d.box.y1, d.box.x2, d.box.y2),
            ):
                records.append(
                    {
                        "image_id": image_id,
                        "category_id": d.class_id,
                        "bbox": box_to_bbox(d.box),
                        "score": float(d.score),
                        "view": vp.view.kind,
                    }
                )
    write_json(records, path)


# ---------------------------------------------------------------------------
# Pipeline configuration


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by the CLI stages; extend via the config document."""

    nms_iou: float = 0.5
    histogram: HistogramConfig = HistogramConfig()
    mode: str = MODE_CLASS_WISE
    views: tuple[str, ...] = VIEW_KINDS
    scale_factor: float = 2.0
    seed: int = 0
    workers: int = 1
    cross_class_nms: bool = False
    simulator: Mapping[str, Any] = field(default_factory=dict)
    paths: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 < self.nms_iou < 1.0:
            raise ConfigError(f"nms_iou must be in (0, 1), got {self.nms_iou}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.scale_factor <= 0:
            raise ConfigError(f"scale_factor must be positive, got {self.scale_factor}")
        for v in self.views:
            if v not in VIEW_KINDS:
                raise ConfigError(f"unknown view {v!r}, expected one of {VIEW_KINDS}")


def config_from_dict(doc: Mapping[str, Any]) -> PipelineConfig:
    known = {
        "nms_iou", "histogram", "mode", "views", "scale_factor",
        "seed", "workers", "cross_class_nms", "simulator", "paths",
    }
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = dict(doc)
    if "histogram" in kwargs:
        h = kwargs["histogram"]
        try:
            kwargs["histogram"] = HistogramConfig(
                lo=float(h.get("lo", 0.5)), hi=float(h.get("hi", 1.0)), n_bins=int(h.get("n_bins", 21))
            )
        except (ValueError, AttributeError) as exc:
            raise ConfigError(f"bad histogram config: {exc}") from exc
    if "views" in kwargs:
        kwargs["views"] = tuple(kwargs["views"])
    try:
        return PipelineConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | Path) -> PipelineConfig:
    doc = read_json(path)
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{path}: config must be a JSON object")
    return config_from_dict(doc)


def config_with_overrides(cfg: PipelineConfig, **overrides: Any) -> PipelineConfig:
    """New config with the given non-None fields replaced."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    return replace(cfg, **changes) if changes else cfg
