"""Mask-constrained perspective rectification.

Builds the homography that maps the line families of two chosen
vanishing points to the image axes. The construction draws, for each of
the two VPs, the pair of lines tangent to the road mask, intersects
them into a quad, pairs the quad with the output rectangle and keeps
cropping the mask from the bottom until at least 80% of the output
image is covered by the warped mask.

The vehicle travel direction always maps to the vertical axis of the
rectified image (VP1 for the pair VP1-VP2, VP3 for VP2-VP3, with VP2
horizontal in both) and vehicles moving down-image keep moving
down-image after the warp.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from functools import cached_property

import cv2
import numpy as np

from .calib import CameraCalibration, Point
from .errors import (
    ConstructionFailure,
    DegenerateQuad,
    ParallelLines,
    PointAtInfinity,
    VPInsideMask,
)

VP_PAIRS = ("vp1vp2", "vp2vp3")

COVERAGE_THRESHOLD = 0.8


@dataclass(frozen=True)
class Line:
    """Homogeneous line a*x + b*y + c = 0 with a**2 + b**2 = 1."""

    a: float
    b: float
    c: float

    @staticmethod
    def through(p: Point, q: Point) -> "Line":
        a = q[1] - p[1]
        b = p[0] - q[0]
        norm = math.hypot(a, b)
        if norm < 1e-12:
            raise ValueError(f"cannot build a line through coincident points {p}, {q}")
        c = -(a * p[0] + b * p[1])
        return Line(a / norm, b / norm, c / norm)

    def side(self, p: Point) -> float:
        """Signed distance of a point from the line."""
        return self.a * p[0] + self.b * p[1] + self.c


def intersect_lines(l1: Line, l2: Line) -> Point:
    cross = l1.a * l2.b - l1.b * l2.a
    if abs(cross) < 1e-12:
        raise ParallelLines(f"lines {l1} and {l2} are parallel")
    x = (l1.b * l2.c - l1.c * l2.b) / cross
    y = (l1.c * l2.a - l1.a * l2.c) / cross
    return (x, y)


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Convex hull (Andrew monotone chain), counterclockwise in (x, y)."""
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    # lexicographic sort on (x, y)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]

    def half(iterable):
        chain: list[np.ndarray] = []
        for p in iterable:
            while len(chain) >= 2:
                o, a = chain[-2], chain[-1]
                if (a[0] - o[0]) * (p[1] - o[1]) - (a[1] - o[1]) * (p[0] - o[0]) <= 0:
                    chain.pop()
                else:
                    break
            chain.append(p)
        return chain

    lower = half(pts)
    upper = half(pts[::-1])
    return np.array(lower[:-1] + upper[:-1])


def point_in_hull(p: Point, hull: np.ndarray, tol: float = 1e-9) -> bool:
    """Whether p lies inside or on a counterclockwise convex polygon."""
    if len(hull) == 1:
        return math.dist(p, hull[0]) <= tol
    if len(hull) == 2:
        line = Line.through(tuple(hull[0]), tuple(hull[1]))
        on_line = abs(line.side(p)) <= tol
        within = (
            min(hull[0][0], hull[1][0]) - tol <= p[0] <= max(hull[0][0], hull[1][0]) + tol
            and min(hull[0][1], hull[1][1]) - tol <= p[1] <= max(hull[0][1], hull[1][1]) + tol
        )
        return on_line and within
    n = len(hull)
    for i in range(n):
        a, b = hull[i], hull[(i + 1) % n]
        cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        if cross < -tol:
            return False
    return True


def tangent_lines(vp: Point, points) -> tuple[Line, Line]:
    """The two lines through vp tangent to the convex hull of the points.

    The lines are the angular extremes of the point set as seen from vp
    and are returned ordered by signed side of the vp-to-centroid axis
    (negative-side tangent first). Every point lies on one closed side
    of each line.
    """
    hull = convex_hull(np.asarray(points, dtype=float))
    if point_in_hull(vp, hull):
        raise VPInsideMask(f"vanishing point {vp} inside the mask hull")
    cx, cy = hull[:, 0].mean(), hull[:, 1].mean()
    axis = math.atan2(cy - vp[1], cx - vp[0])
    # signed angles of hull vertices around the centroid direction;
    # vp outside the hull guarantees a span < pi
    rel = np.arctan2(hull[:, 1] - vp[1], hull[:, 0] - vp[0]) - axis
    rel = (rel + np.pi) % (2 * np.pi) - np.pi
    lo = tuple(hull[int(np.argmin(rel))])
    hi = tuple(hull[int(np.argmax(rel))])
    return Line.through(vp, lo), Line.through(vp, hi)


def quad_corners(t1a: Line, t1b: Line, t2a: Line, t2b: Line):
    """Pairwise intersections {t1a, t1b} x {t2a, t2b}, as a 2x2 grid."""
    return (
        (intersect_lines(t1a, t2a), intersect_lines(t1a, t2b)),
        (intersect_lines(t1b, t2a), intersect_lines(t1b, t2b)),
    )


def homography_from_quad(src, dst) -> np.ndarray:
    """Exact 4-point perspective solve (H[2,2] pinned to 1)."""
    a = np.zeros((8, 8))
    b = np.zeros(8)
    for i, ((x, y), (u, v)) in enumerate(zip(src, dst)):
        a[2 * i] = [x, y, 1, 0, 0, 0, -u * x, -u * y]
        b[2 * i] = u
        a[2 * i + 1] = [0, 0, 0, x, y, 1, -v * x, -v * y]
        b[2 * i + 1] = v
    try:
        h = np.linalg.solve(a, b)
    except np.linalg.LinAlgError as exc:
        raise DegenerateQuad(f"singular 4-point system: {exc}") from exc
    H = np.append(h, 1.0).reshape(3, 3)
    if abs(np.linalg.det(H)) < 1e-12:
        raise DegenerateQuad("homography determinant vanishes")
    return H


def warp_point(H: np.ndarray, p: Point) -> Point:
    x, y = p
    w = H[2, 0] * x + H[2, 1] * y + H[2, 2]
    if abs(w) < 1e-12:
        raise PointAtInfinity(f"point {p} maps to infinity")
    u = (H[0, 0] * x + H[0, 1] * y + H[0, 2]) / w
    v = (H[1, 0] * x + H[1, 1] * y + H[1, 2]) / w
    return (u, v)


def warp_points(H: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Vectorized warp_point for an (N, 2) array."""
    pts = np.asarray(pts, dtype=float)
    w = H[2, 0] * pts[:, 0] + H[2, 1] * pts[:, 1] + H[2, 2]
    if np.any(np.abs(w) < 1e-12):
        raise PointAtInfinity("some points map to infinity")
    u = (H[0, 0] * pts[:, 0] + H[0, 1] * pts[:, 1] + H[0, 2]) / w
    v = (H[1, 0] * pts[:, 0] + H[1, 1] * pts[:, 1] + H[1, 2]) / w
    return np.stack([u, v], axis=1)


def ideal_direction(H: np.ndarray, p: Point) -> tuple[float, float, float]:
    """Homogeneous image of a point under H, without dehomogenization."""
    x, y = p
    return (
        H[0, 0] * x + H[0, 1] * y + H[0, 2],
        H[1, 0] * x + H[1, 1] * y + H[1, 2],
        H[2, 0] * x + H[2, 1] * y + H[2, 2],
    )


class RoadMask:
    """Binary raster of the surveilled traffic lanes.

    Built either from a nonzero-foreground raster or from a polygon
    (rasterized onto the given bounds). Hull geometry uses the outer
    corners of the foreground pixels, not their centers.
    """

    def __init__(self, raster: np.ndarray):
        self.raster = np.asarray(raster).astype(bool)
        if not self.raster.any():
            raise ValueError("mask has no foreground pixels")
        self.bounds = (self.raster.shape[1], self.raster.shape[0])

    @staticmethod
    def from_polygon(polygon, bounds: tuple[int, int]) -> "RoadMask":
        w, h = bounds
        raster = np.zeros((h, w), dtype=np.uint8)
        cv2.fillPoly(raster, [np.round(np.asarray(polygon)).astype(np.int32)], 1)
        return RoadMask(raster)

    @staticmethod
    def load(path, bounds: tuple[int, int] | None = None) -> "RoadMask":
        """Load a mask from a raster image or a {"polygon": ...} JSON file."""
        path = str(path)
        if path.endswith(".json"):
            with open(path, encoding="utf-8") as f:
                data = json.load(f)
            if bounds is None:
                raise ValueError("polygon masks need explicit image bounds")
            return RoadMask.from_polygon(data["polygon"], bounds)
        raster = cv2.imread(path, cv2.IMREAD_GRAYSCALE)
        if raster is None:
            raise OSError(f"cannot read mask image {path}")
        return RoadMask(raster > 0)

    def cropped(self, rows: int) -> "RoadMask | None":
        """Mask with the bottom `rows` foreground rows removed; None if empty."""
        if rows <= 0:
            return self
        ys = np.flatnonzero(self.raster.any(axis=1))
        if len(ys) <= rows:
            return None
        out = self.raster.copy()
        out[ys[len(ys) - rows]:] = False
        return RoadMask(out)

    def hull_points(self) -> np.ndarray:
        """Outer corner points of the per-row foreground extremes."""
        rows = np.flatnonzero(self.raster.any(axis=1))
        pts = []
        for y in rows:
            xs = np.flatnonzero(self.raster[y])
            x0, x1 = xs[0], xs[-1] + 1
            pts.extend([(x0, y), (x0, y + 1), (x1, y), (x1, y + 1)])
        return np.asarray(pts, dtype=float)


@dataclass(frozen=True)
class RectifiedView:
    """A built rectification: homography, output size and bookkeeping."""

    H: np.ndarray
    out_size: tuple[int, int]
    vp_pair: str
    vpu: Point
    coverage: float
    crop_rows: int

    @cached_property
    def H_inv(self) -> np.ndarray:
        return np.linalg.inv(self.H)

    def warp(self, p: Point) -> Point:
        return warp_point(self.H, p)

    def unwarp(self, p: Point) -> Point:
        return warp_point(self.H_inv, p)

    def to_json(self) -> dict:
        return {
            "H": [float(v) for v in self.H.reshape(-1)],
            "out_size": list(self.out_size),
            "vp_pair": self.vp_pair,
            "vpu": list(self.vpu),
            "coverage": self.coverage,
            "crop_rows": self.crop_rows,
        }

    @staticmethod
    def from_json(data: dict) -> "RectifiedView":
        return RectifiedView(
            H=np.asarray(data["H"], dtype=float).reshape(3, 3),
            out_size=tuple(data["out_size"]),
            vp_pair=data["vp_pair"],
            vpu=tuple(data["vpu"]),
            coverage=float(data["coverage"]),
            crop_rows=int(data["crop_rows"]),
        )


def _hull_crosses_line(hull: np.ndarray, line: Line, tol: float = 1e-9) -> bool:
    sides = line.a * hull[:, 0] + line.b * hull[:, 1] + line.c
    return bool((sides > tol).any() and (sides < -tol).any())


def _coverage(mask: RoadMask, H: np.ndarray, out_size: tuple[int, int]) -> float:
    w, h = out_size
    warped = cv2.warpPerspective(
        mask.raster.astype(np.uint8), H.astype(np.float64), (w, h),
        flags=cv2.INTER_NEAREST,
    )
    return float(np.count_nonzero(warped)) / float(w * h)


def build_rectification(
    calib: CameraCalibration,
    mask: RoadMask,
    pair: str,
    out_size: tuple[int, int],
    crop_step: int = 1,
) -> RectifiedView:
    """Run the tangent-quad construction with the bottom-crop coverage loop.

    The pair VP1-VP3 is rejected at the interface. Raises
    ConstructionFailure when the mask is exhausted by cropping, a VP
    falls inside the mask hull, the line joining the chosen VPs crosses
    the mask, or the quad solve degenerates.
    """
    if pair not in VP_PAIRS:
        raise ValueError(f"vp pair must be one of {VP_PAIRS}, got {pair!r}")
    if pair == "vp1vp2":
        vertical_vp, horizontal_vp, unused_vp = calib.vp1, calib.vp2, calib.vp3
    else:
        vertical_vp, horizontal_vp, unused_vp = calib.vp3, calib.vp2, calib.vp1

    w_out, h_out = out_size
    crop_rows = 0
    current: RoadMask | None = mask
    while current is not None:
        try:
            view = _try_build(
                calib, current, vertical_vp, horizontal_vp, unused_vp,
                pair, (w_out, h_out), crop_rows,
            )
        except (VPInsideMask, ParallelLines, DegenerateQuad, PointAtInfinity) as exc:
            raise ConstructionFailure(f"rectification failed: {exc}") from exc
        if view is not None:
            return view
        crop_rows += crop_step
        current = mask.cropped(crop_rows)
    raise ConstructionFailure("mask exhausted by bottom cropping before reaching coverage")


def _try_build(calib, mask, vertical_vp, horizontal_vp, unused_vp, pair,
               out_size, crop_rows) -> RectifiedView | None:
    hull_pts = mask.hull_points()
    hull = convex_hull(hull_pts)
    joining = Line.through(vertical_vp, horizontal_vp)
    if _hull_crosses_line(hull, joining):
        raise ConstructionFailure(
            "line joining the chosen vanishing points intersects the mask"
        )

    tv = tangent_lines(vertical_vp, hull)
    th = tangent_lines(horizontal_vp, hull)
    corners = quad_corners(tv[0], tv[1], th[0], th[1])

    w, h = out_size
    H = _oriented_homography(calib, corners, hull, (w, h))
    coverage = _coverage(mask, H, out_size)
    if coverage < COVERAGE_THRESHOLD:
        return None
    vpu = warp_point(H, unused_vp)
    return RectifiedView(
        H=H, out_size=(w, h), vp_pair=pair, vpu=vpu,
        coverage=coverage, crop_rows=crop_rows,
    )


def _oriented_homography(calib, corners, hull, out_size) -> np.ndarray:
    """Resolve the quad-to-rectangle corner pairing.

    Starts from the index-order assignment, then flips the vertical
    output coordinate so vehicle motion keeps its vertical direction
    (probed along the centroid-to-VP1 axis) and flips the horizontal
    one so the map is orientation-preserving.
    """
    w, h = out_size
    cx, cy = float(hull[:, 0].mean()), float(hull[:, 1].mean())
    xs = [0.0, float(w)]
    ys = [0.0, float(h)]

    def solve():
        src, dst = [], []
        for i in range(2):
            for j in range(2):
                src.append(corners[i][j])
                dst.append((xs[i], ys[j]))
        return homography_from_quad(src, dst)

    H = solve()

    # travel direction: step from the centroid toward VP1 and require
    # the warped displacement to keep its vertical sign
    ux, uy = calib.vp1[0] - cx, calib.vp1[1] - cy
    norm = math.hypot(ux, uy)
    if norm > 1e-9 and abs(uy) / norm > 1e-9:
        step = 1e-3 * norm
        p0 = warp_point(H, (cx, cy))
        p1 = warp_point(H, (cx + step * ux / norm, cy + step * uy / norm))
        if (p1[1] - p0[1]) * uy < 0:
            ys.reverse()
            H = solve()

    # orientation: Jacobian determinant of H at the centroid
    denom = H[2, 0] * cx + H[2, 1] * cy + H[2, 2]
    if np.linalg.det(H) / denom**3 < 0:
        xs.reverse()
        H = solve()
    return H
