"""Compound-figure separation: classical gutter splitting, detection
post-processing, panel ordering and cropping.

The built-in separation path finds runs of near-white rows/columns
(gutters) via projection profiles and splits recursively, alternating
between the two axes.  A detector service can replace the splitter; its
raw boxes go through ``filter_detections`` with the same downstream
contract.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass

import numpy as np

from .errors import EmptyInput, OutOfBounds


@dataclass(frozen=True)
class SubfigureBox:
    """Axis-aligned panel region, (x, y) top-left, in pixels."""

    x: int
    y: int
    w: int
    h: int
    confidence: float = 1.0

    def area(self) -> int:
        return self.w * self.h

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class GutterParams:
    """Knobs for the projection-profile splitter.

    whiteness_threshold: luminance fraction at/above which a pixel counts
    as background; min_gutter_frac: minimal gutter thickness as a fraction
    of the axis being split; min_panel_px: boxes narrower/shorter than
    this are discarded; max_depth: recursion limit.
    """

    whiteness_threshold: float = 0.95
    min_gutter_frac: float = 0.02
    min_panel_px: int = 32
    max_depth: int = 4

    def __post_init__(self):
        if not (0 < self.whiteness_threshold <= 1.0):
            raise ValueError("whiteness_threshold must be in (0, 1]")
        if self.min_gutter_frac <= 0 or self.min_panel_px <= 0 or self.max_depth <= 0:
            raise ValueError("gutter parameters must be positive")


def luminance(image: np.ndarray) -> np.ndarray:
    """Mean-of-channels luminance in [0, 1] for uint8 or float images."""
    arr = np.asarray(image)
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
    if arr.ndim == 3:
        arr = arr.mean(axis=2)
    return arr


def split_gutters(image: np.ndarray, params: GutterParams | None = None) -> list[SubfigureBox]:
    """Split a figure into panel boxes along near-white gutters.

    Recursion alternates the preferred split axis (rows first, then
    columns); when the preferred axis has no qualifying gutter the other
    axis is tried before giving up.  Every emitted box is the tight
    bounding box of non-background content, so panels never include
    gutter margins.  An all-background image yields no boxes; boxes with
    a side below ``min_panel_px`` are dropped.  All confidences are 1.0.
    """
    params = params or GutterParams()
    lum = luminance(image)
    if lum.size == 0:
        return []
    boxes: list[SubfigureBox] = []
    _split_region(lum, 0, 0, lum.shape[1], lum.shape[0], axis=0, depth=0,
                  params=params, out=boxes)
    boxes.sort(key=lambda b: (b.y, b.x))
    return boxes


def _content_bbox(lum: np.ndarray, x0: int, y0: int, x1: int, y1: int,
                  threshold: float) -> tuple[int, int, int, int] | None:
    """Tight (x0, y0, x1, y1) around sub-threshold pixels, or None if blank."""
    region = lum[y0:y1, x0:x1]
    mask = region < threshold
    if not mask.any():
        return None
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    return (x0 + int(cols[0]), y0 + int(rows[0]),
            x0 + int(cols[-1]) + 1, y0 + int(rows[-1]) + 1)


def _gutter_runs(profile: np.ndarray, threshold: float, min_len: int) -> list[tuple[int, int]]:
    """Interior runs of profile >= threshold at least min_len long."""
    white = profile >= threshold
    runs: list[tuple[int, int]] = []
    start = None
    for i, flag in enumerate(white):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(white)))
    # Boundary runs are margins, not gutters; content tightening removes
    # them beforehand, this guard is for float-edge cases.
    interior = [(a, b) for a, b in runs if a > 0 and b < len(white)]
    return [(a, b) for a, b in interior if b - a >= min_len]


def _split_region(lum: np.ndarray, x0: int, y0: int, x1: int, y1: int,
                  axis: int, depth: int, params: GutterParams,
                  out: list[SubfigureBox]) -> None:
    bbox = _content_bbox(lum, x0, y0, x1, y1, params.whiteness_threshold)
    if bbox is None:
        return
    x0, y0, x1, y1 = bbox
    w, h = x1 - x0, y1 - y0
    if depth < params.max_depth:
        for ax in (axis, 1 - axis):
            region = lum[y0:y1, x0:x1]
            if ax == 0:  # horizontal gutters: profile over rows
                profile = region.mean(axis=1)
                min_len = max(1, int(np.ceil(params.min_gutter_frac * h)))
            else:  # vertical gutters: profile over columns
                profile = region.mean(axis=0)
                min_len = max(1, int(np.ceil(params.min_gutter_frac * w)))
            runs = _gutter_runs(profile, params.whiteness_threshold, min_len)
            if not runs:
                continue
            edges = [0]
            for a, b in runs:
                edges.extend((a, b))
            edges.append(len(profile))
            for lo, hi in zip(edges[0::2], edges[1::2]):
                if hi <= lo:
                    continue
                if ax == 0:
                    _split_region(lum, x0, y0 + lo, x1, y0 + hi,
                                  axis=1 - ax, depth=depth + 1, params=params, out=out)
                else:
                    _split_region(lum, x0 + lo, y0, x0 + hi, y1,
                                  axis=1 - ax, depth=depth + 1, params=params, out=out)
            return
    if w >= params.min_panel_px and h >= params.min_panel_px:
        out.append(SubfigureBox(x=x0, y=y0, w=w, h=h, confidence=1.0))


def box_iou(a: SubfigureBox | tuple, b: SubfigureBox | tuple) -> float:
    """Intersection-over-union of two (x, y, w, h) boxes; 0 when disjoint."""
    ax, ay, aw, ah = a.as_tuple() if isinstance(a, SubfigureBox) else tuple(a)
    bx, by, bw, bh = b.as_tuple() if isinstance(b, SubfigureBox) else tuple(b)
    ix0, iy0 = max(ax, bx), max(ay, by)
    ix1, iy1 = min(ax + aw, bx + bw), min(ay + ah, by + bh)
    iw, ih = max(0, ix1 - ix0), max(0, iy1 - iy0)
    inter = iw * ih
    if inter == 0:
        return 0.0
    union = aw * ah + bw * bh - inter
    return inter / union


def filter_detections(raw: list[SubfigureBox], conf_threshold: float = 0.7,
                      nms_iou: float = 0.5) -> list[SubfigureBox]:
    """Keep boxes with confidence >= threshold, then greedy NMS.

    Suppression removes any box overlapping an already-kept box at
    IoU >= nms_iou, walking candidates in descending confidence (ties
    broken by input order).  Output stays sorted by descending confidence.
    """
    candidates = [b for b in raw if b.confidence >= conf_threshold]
    candidates = sorted(enumerate(candidates), key=lambda p: (-p[1].confidence, p[0]))
    kept: list[SubfigureBox] = []
    for _, box in candidates:
        if all(box_iou(box, k) < nms_iou for k in kept):
            kept.append(box)
    return kept


def reading_order(boxes: list[SubfigureBox]) -> list[int]:
    """Row-major ordering of panel boxes (top rows first, left to right).

    A box joins the current row when its vertical center is within half
    the median box height of the row's first member.  Returns a
    permutation of the input indices.
    """
    if not boxes:
        raise EmptyInput("reading_order requires at least one box")
    median_h = statistics.median(b.h for b in boxes)
    order = sorted(range(len(boxes)), key=lambda i: (boxes[i].y + boxes[i].h / 2.0,
                                                     boxes[i].x, i))
    rows: list[list[int]] = []
    anchors: list[float] = []
    for i in order:
        yc = boxes[i].y + boxes[i].h / 2.0
        if rows and abs(yc - anchors[-1]) <= median_h / 2.0:
            rows[-1].append(i)
        else:
            rows.append([i])
            anchors.append(yc)
    rows.sort(key=lambda row: sum(boxes[i].y + boxes[i].h / 2.0 for i in row) / len(row))
    result: list[int] = []
    for row in rows:
        result.extend(sorted(row, key=lambda i: (boxes[i].x, i)))
    return result


def crop_panels(image: np.ndarray, boxes: list[SubfigureBox]) -> list[np.ndarray]:
    """Crop one raster per box; dimensions are exactly (h, w) per box."""
    arr = np.asarray(image)
    height, width = arr.shape[0], arr.shape[1]
    crops = []
    for b in boxes:
        if b.x < 0 or b.y < 0 or b.x + b.w > width or b.y + b.h > height:
            raise OutOfBounds(f"box {b.as_tuple()} outside {width}x{height} image")
        crops.append(arr[b.y:b.y + b.h, b.x:b.x + b.w].copy())
    return crops
