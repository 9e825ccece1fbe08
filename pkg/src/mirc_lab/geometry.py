"""Integer rectangle geometry for corner-anchored crop hierarchies.

All rectangles live in the coordinate frame of the top-level (level-0) clip,
measured in whole pixels.  Every operation here is exact integer arithmetic so
that two runs (or two implementations) produce bit-identical crop trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum


class Corner(str, Enum):
    """Corner a child crop is anchored to.

    Declaration order (UL, BL, UR, BR) is the canonical tie-breaking order
    used everywhere a deterministic choice between corners is needed.
    """

    UL = "UL"
    BL = "BL"
    UR = "UR"
    BR = "BR"

    @property
    def rank(self) -> int:
        return _CORNER_RANK[self]


_CORNER_RANK = {Corner.UL: 0, Corner.BL: 1, Corner.UR: 2, Corner.BR: 3}


class DegenerateCropError(ValueError):
    """Raised when a requested child crop would collapse to zero pixels."""


def round_half_away(v: float) -> int:
    """Round positive v to the nearest integer, halves away from zero."""
    return math.floor(v + 0.5)


@dataclass(frozen=True)
class CropRect:
    """Axis-aligned pixel rectangle: origin (x, y), size w x h."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rectangle must be at least 1x1, got {self.w}x{self.h}")

    @property
    def area(self) -> int:
        return self.w * self.h

    @property
    def x2(self) -> int:
        return self.x + self.w

    @property
    def y2(self) -> int:
        return self.y + self.h

    def contains(self, other: "CropRect") -> bool:
        return (
            self.x <= other.x
            and self.y <= other.y
            and other.x2 <= self.x2
            and other.y2 <= self.y2
        )

    def to_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class OverlapReport:
    """Pairwise overlap quantities between two rectangles.

    share_of_first is intersection / area(first): 1.0 means the first rect is
    fully inside the second.
    """

    intersection_area: int
    iou: float
    share_of_first: float


def intersection_area(a: CropRect, b: CropRect) -> int:
    iw = min(a.x2, b.x2) - max(a.x, b.x)
    ih = min(a.y2, b.y2) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0
    return iw * ih


def overlap(a: CropRect, b: CropRect) -> OverlapReport:
    inter = intersection_area(a, b)
    union = a.area + b.area - inter
    return OverlapReport(
        intersection_area=inter,
        iou=inter / union,
        share_of_first=inter / a.area,
    )


def child_rect(parent: CropRect, corner: Corner, s: float) -> CropRect:
    """Corner-anchored child crop of `parent`, scaled by s per dimension.

    Child size is round(s*w) x round(s*h) (halves away from zero); the child
    shares the named corner with its parent, so it is always contained in it.
    """
    cw = round_half_away(s * parent.w)
    ch = round_half_away(s * parent.h)
    if cw < 1 or ch < 1:
        raise DegenerateCropError(
            f"child crop of {parent.w}x{parent.h} at scale {s} would be {cw}x{ch}"
        )
    if corner in (Corner.UL, Corner.BL):
        cx = parent.x
    else:
        cx = parent.x + parent.w - cw
    if corner in (Corner.UL, Corner.UR):
        cy = parent.y
    else:
        cy = parent.y + parent.h - ch
    return CropRect(cx, cy, cw, ch)
