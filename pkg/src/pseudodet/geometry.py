"""Boxes, IoU, and the invertible view transforms used for multi-view inference.

Boxes are kept in corner form (x1, y1, x2, y2) with continuous pixel
coordinates; the COCO (x, y, w, h) convention only appears at the file
boundary.  A horizontal flip maps x to ``width - x`` (no -1 inclusivity
correction), which keeps every transform exactly invertible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple


class Box(NamedTuple):
    """Axis-aligned rectangle, corner form, x1 < x2 and y1 < y2."""

    x1: float
    y1: float
    x2: float
    y2: float

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


class ImageDims(NamedTuple):
    width: float
    height: float


VIEW_KINDS = ("identity", "hflip", "scale", "hflip_scale")

DEFAULT_SCALE_FACTOR = 2.0


@dataclass(frozen=True)
class ViewSpec:
    """One inference view: identity, horizontal flip, upscale, or both.

    ``factor`` only matters for the scaled kinds and must be positive.
    """

    kind: str
    factor: float = DEFAULT_SCALE_FACTOR

    def __post_init__(self) -> None:
        if self.kind not in VIEW_KINDS:
            raise ValueError(f"unknown view kind {self.kind!r}, expected one of {VIEW_KINDS}")
        if not self.factor > 0:
            raise ValueError(f"view scale factor must be positive, got {self.factor}")


IDENTITY_VIEW = ViewSpec("identity")

DEFAULT_VIEWS = (
    ViewSpec("identity"),
    ViewSpec("hflip"),
    ViewSpec("scale"),
    ViewSpec("hflip_scale"),
)


def view_from_name(name: str, factor: float = DEFAULT_SCALE_FACTOR) -> ViewSpec:
    return ViewSpec(name, factor)


def parse_views(names, factor: float = DEFAULT_SCALE_FACTOR) -> tuple[ViewSpec, ...]:
    """Build ViewSpecs from view-tag names, rejecting duplicates."""
    specs = tuple(view_from_name(n, factor) for n in names)
    if len({v.kind for v in specs}) != len(specs):
        raise ValueError(f"duplicate view kinds in {list(names)}")
    return specs


def validate_box(b: Box) -> Box:
    """Check the Box invariants (finite coordinates, positive area)."""
    if not all(math.isfinite(c) for c in b):
        raise ValueError(f"box has non-finite coordinates: {b}")
    if not (b.x1 < b.x2 and b.y1 < b.y2):
        raise ValueError(f"box must have positive area: {b}")
    return b


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when disjoint."""
    ix1 = a.x1 if a.x1 > b.x1 else b.x1
    iy1 = a.y1 if a.y1 > b.y1 else b.y1
    ix2 = a.x2 if a.x2 < b.x2 else b.x2
    iy2 = a.y2 if a.y2 < b.y2 else b.y2
    iw = ix2 - ix1
    ih = iy2 - iy1
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter
    return inter / union


def apply_view(b: Box, v: ViewSpec, dims: ImageDims) -> Box:
    """Map a box from the original frame into the view's coordinate frame.

    ``dims`` are always the dimensions of the original image.  The flip
    reorders x1/x2 so the corner invariant is preserved; the combined kind
    flips first, then scales.
    """
    kind = v.kind
    if kind == "identity":
        return b
    if kind == "hflip":
        w = dims.width
        return Box(w - b.x2, b.y1, w - b.x1, b.y2)
    if kind == "scale":
        f = v.factor
        return Box(b.x1 * f, b.y1 * f, b.x2 * f, b.y2 * f)
    # hflip_scale
    w = dims.width
    f = v.factor
    return Box((w - b.x2) * f, b.y1 * f, (w - b.x1) * f, b.y2 * f)


def invert_view(b: Box, v: ViewSpec, dims: ImageDims) -> Box:
    """Map a box from the view's coordinate frame back to the original frame."""
    kind = v.kind
    if kind == "identity":
        return b
    if kind == "hflip":
        w = dims.width
        return Box(w - b.x2, b.y1, w - b.x1, b.y2)
    if kind == "scale":
        f = v.factor
        return Box(b.x1 / f, b.y1 / f, b.x2 / f, b.y2 / f)
    # hflip_scale: unscale, then unflip
    w = dims.width
    f = v.factor
    return Box(w - b.x2 / f, b.y1 / f, w - b.x1 / f, b.y2 / f)


def clip_box(b: Box, dims: ImageDims) -> Box | None:
    """Clip a box to the image bounds; None when nothing remains inside."""
    x1 = max(0.0, min(b.x1, dims.width))
    y1 = max(0.0, min(b.y1, dims.height))
    x2 = max(0.0, min(b.x2, dims.width))
    y2 = max(0.0, min(b.y2, dims.height))
    if x2 - x1 <= 0.0 or y2 - y1 <= 0.0:
        return None
    return Box(x1, y1, x2, y2)
