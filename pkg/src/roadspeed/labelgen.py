"""Training-label generation from instance masks.

Turns a per-vehicle instance mask (original-image pixels) into a
rectified-space 2D box with the cc parameter, using the tangent
construction: two lines from VPU tangent to the warped mask, each kept
at its bounding-box intersection farther from VPU, yielding two cc
candidates of which the one whose cc line is farther from VPU wins.
"""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .boxgeom import Box2D, CcBox
from .calib import Point
from .errors import (
    DegenerateBox,
    DegenerateVPU,
    EmptyMask,
    GeometryError,
    VPInsideMask,
)
from .rectify import RectifiedView, convex_hull, point_in_hull, tangent_lines, warp_points

log = logging.getLogger(__name__)

_PIXEL_CORNERS = np.array([(0, 0), (1, 0), (0, 1), (1, 1)], dtype=float)


@dataclass(frozen=True)
class InstanceMask:
    """Foreground pixels of one vehicle instance in original-image coordinates."""

    frame: int
    instance_id: int
    pixels: np.ndarray  # (N, 2) int array of (x, y)


@dataclass(frozen=True)
class LabelRecord:
    frame: int
    instance_id: int
    ccbox: CcBox


def bbox_of_mask(points) -> Box2D:
    """Tight axis-aligned bounds of a rectified point set."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise EmptyMask("no points")
    x0, y0 = pts.min(axis=0)
    x1, y1 = pts.max(axis=0)
    if x1 - x0 <= 0 or y1 - y0 <= 0:
        raise DegenerateBox(f"zero-area box ({x0}, {y0}, {x1}, {y1})")
    return (float(x0), float(y0), float(x1), float(y1))


def _box_boundary_hits(line, box: Box2D):
    """Intersections of a line with the rectangle boundary (up to 2 points)."""
    x0, y0, x1, y1 = box
    eps = 1e-9 * max(1.0, x1 - x0, y1 - y0)
    hits = []
    # a*x + b*y + c = 0
    a, b, c = line.a, line.b, line.c
    if abs(b) > 1e-15:
        for x in (x0, x1):
            y = -(a * x + c) / b
            if y0 - eps <= y <= y1 + eps:
                hits.append(((x, y), "vertical"))
    if abs(a) > 1e-15:
        for y in (y0, y1):
            x = -(b * y + c) / a
            if x0 - eps <= x <= x1 + eps:
                hits.append(((x, y), "horizontal"))
    # dedupe corner hits (one point reported for both edge kinds; keep
    # the vertical classification, whose cc readout is direct)
    unique = []
    for p, kind in sorted(hits, key=lambda h: h[1], reverse=True):
        if all(math.dist(p, q) > eps for q, _ in unique):
            unique.append((p, kind))
    return unique


def cc_from_mask(points, vpu: Point) -> CcBox:
    """2D box + cc from a rectified instance point set and VPU.

    Implements the tangent construction: for each of the two tangents
    the bounding-box intersection closer to VPU is discarded; a kept
    point on a vertical edge reads off a cc candidate directly, one on
    a horizontal edge goes through the vertical-line + VPU-to-nearest-
    corner construction. The candidate whose cc line is farther from
    VPU wins, and cc is clamped to [0, 1].
    """
    box, raw_cc = cc_from_mask_raw(points, vpu)
    return CcBox(box=box, cc=min(1.0, max(0.0, raw_cc)))


def cc_from_mask_raw(points, vpu: Point) -> tuple[Box2D, float]:
    """Like cc_from_mask but returns the unclamped cc value."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise EmptyMask("no points")
    hull = convex_hull(pts)
    if point_in_hull(vpu, hull):
        raise VPInsideMask(f"VPU {vpu} inside the mask hull")
    box = bbox_of_mask(pts)
    x0, y0, x1, y1 = box
    vx, vy = vpu
    if y0 <= vy <= y1:
        raise DegenerateVPU(f"VPU {vpu} vertically overlaps the box {box}")
    above = vy < y0
    height = y1 - y0

    corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]
    nearest_corner = min(corners, key=lambda c: math.dist(c, vpu))

    candidates = []
    for tangent in tangent_lines(vpu, hull):
        hits = _box_boundary_hits(tangent, box)
        if not hits:
            continue
        (px, py), kind = max(hits, key=lambda h: math.dist(h[0], vpu))
        if kind == "vertical":
            y_cc = py
        else:
            # vertical line through the kept point, cut by the line from
            # VPU through the nearest bounding-box corner
            cx, cy = nearest_corner
            if abs(cx - vx) < 1e-12:
                y_cc = cy
            else:
                y_cc = vy + (px - vx) * (cy - vy) / (cx - vx)
        candidates.append(y_cc)

    if not candidates:
        raise DegenerateBox("tangents miss the bounding box")
    # the tangent grazing the far side of the box from VPU reads the cc
    # line exactly; the near-side tangent only approximates it, and its
    # candidate always sits closer to VPU
    y_cc = max(candidates) if above else min(candidates)
    return box, (y_cc - y0) / height


def warp_mask_points(pixels: np.ndarray, view: RectifiedView) -> np.ndarray:
    """Warp the 4 corner points of every foreground pixel into rectified space."""
    pixels = np.asarray(pixels, dtype=float)
    corners = (pixels[:, None, :] + _PIXEL_CORNERS[None, :, :]).reshape(-1, 2)
    return warp_points(view.H, corners)


def generate_labels(
    masks: list[InstanceMask], view: RectifiedView
) -> tuple[list[LabelRecord], Counter]:
    """Batch cc_from_mask over instances; per-instance failures are skipped.

    Returns the records ordered by (frame, instance id) together with a
    counter of skip reasons (exception class names and "cc_clamped").
    """
    records = []
    skipped: Counter = Counter()
    for inst in sorted(masks, key=lambda m: (m.frame, m.instance_id)):
        try:
            rect_pts = warp_mask_points(inst.pixels, view)
            box, raw_cc = cc_from_mask_raw(rect_pts, view.vpu)
        except GeometryError as exc:
            skipped[type(exc).__name__] += 1
            log.debug("skipping instance %s/%s: %s", inst.frame, inst.instance_id, exc)
            continue
        if raw_cc < 0.0 or raw_cc > 1.0:
            skipped["cc_clamped"] += 1
        ccbox = CcBox(box=box, cc=min(1.0, max(0.0, raw_cc)))
        records.append(LabelRecord(frame=inst.frame, instance_id=inst.instance_id, ccbox=ccbox))
    return records, skipped
