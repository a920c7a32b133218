"""Vanishing-point camera model.

A traffic camera is calibrated by the image positions of two orthogonal
vanishing points (VP1 = travel direction, VP2 = in-plane perpendicular),
the principal point and a metric scale. Everything else -- focal length,
the third vanishing point and the road-plane normal -- is derived here.

All operations are pure functions over immutable values; the road plane
is fixed as n . X = 1 in camera coordinates with the arbitrary plane
offset absorbed into ``scale``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .errors import HorizonPoint, NonOrthogonalVPs, VerticalThirdVP

Point = tuple[float, float]

ORTHO_TOL = 1e-9


def focal_from_vps(vp1: Point, vp2: Point, pp: Point) -> float:
    """Focal length (px) making the rays to vp1 and vp2 orthogonal.

    Requires the planar dot product (vp1 - pp) . (vp2 - pp) to be
    negative; otherwise no real focal length exists.
    """
    dot = (vp1[0] - pp[0]) * (vp2[0] - pp[0]) + (vp1[1] - pp[1]) * (vp2[1] - pp[1])
    if dot >= 0.0:
        raise NonOrthogonalVPs(
            f"(vp1 - pp) . (vp2 - pp) = {dot:g} >= 0; no real focal length"
        )
    return math.sqrt(-dot)


def third_vp(vp1: Point, vp2: Point, pp: Point, focal: float) -> Point:
    """Third vanishing point, orthogonal to the first two.

    Computed as the cross product of the two back-projected ray
    directions in homogeneous coordinates, then projected back to the
    image plane.
    """
    d1 = (vp1[0] - pp[0], vp1[1] - pp[1], focal)
    d2 = (vp2[0] - pp[0], vp2[1] - pp[1], focal)
    d3 = (
        d1[1] * d2[2] - d1[2] * d2[1],
        d1[2] * d2[0] - d1[0] * d2[2],
        d1[0] * d2[1] - d1[1] * d2[0],
    )
    if abs(d3[2]) < 1e-12:
        raise VerticalThirdVP("third vanishing point at infinity")
    return (pp[0] + focal * d3[0] / d3[2], pp[1] + focal * d3[1] / d3[2])


@dataclass(frozen=True)
class CameraCalibration:
    """Completed scene calibration.

    ``normal`` is the unit road-plane normal in camera coordinates
    (toward vp3), oriented so that rays through road pixels have a
    positive dot product with it.
    """

    vp1: Point
    vp2: Point
    pp: Point
    focal: float
    vp3: Point
    scale: float
    image_size: tuple[int, int]
    normal: tuple[float, float, float]

    def ray(self, p: Point) -> tuple[float, float, float]:
        """Back-projected (unnormalized) ray direction of an image point."""
        return (p[0] - self.pp[0], p[1] - self.pp[1], self.focal)


def complete_calibration(
    vp1: Point,
    vp2: Point,
    scale: float,
    image_size: tuple[int, int],
    pp: Point | None = None,
) -> CameraCalibration:
    """Derive focal length, vp3 and the road normal from two VPs.

    The principal point defaults to the image center. The normal is
    flipped, if needed, so the bottom-center pixel of the image looks at
    the road side of the plane.
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    w, h = image_size
    if pp is None:
        pp = (w / 2.0, h / 2.0)
    focal = focal_from_vps(vp1, vp2, pp)
    vp3 = third_vp(vp1, vp2, pp, focal)

    d3 = (vp3[0] - pp[0], vp3[1] - pp[1], focal)
    norm = math.sqrt(d3[0] ** 2 + d3[1] ** 2 + d3[2] ** 2)
    n = (d3[0] / norm, d3[1] / norm, d3[2] / norm)
    bottom_center = (w / 2.0 - pp[0], h - pp[1], focal)
    if n[0] * bottom_center[0] + n[1] * bottom_center[1] + n[2] * bottom_center[2] < 0:
        n = (-n[0], -n[1], -n[2])
    return CameraCalibration(
        vp1=tuple(vp1),
        vp2=tuple(vp2),
        pp=tuple(pp),
        focal=focal,
        vp3=vp3,
        scale=scale,
        image_size=(int(w), int(h)),
        normal=n,
    )


def project_to_road(p: Point, calib: CameraCalibration) -> tuple[float, float, float]:
    """Intersect the pixel's viewing ray with the road plane n . X = 1."""
    r = calib.ray(p)
    n = calib.normal
    denom = n[0] * r[0] + n[1] * r[1] + n[2] * r[2]
    if denom <= 1e-9:
        raise HorizonPoint(f"pixel {p} at or above the road-plane horizon")
    return (r[0] / denom, r[1] / denom, r[2] / denom)


def road_distance(p: Point, q: Point, calib: CameraCalibration) -> float:
    """Metric distance (meters) between the road-plane projections of p and q."""
    a = project_to_road(p, calib)
    b = project_to_road(q, calib)
    return calib.scale * math.dist(a, b)


def load_calibration(path) -> CameraCalibration:
    """Read a calibration JSON file.

    Expected fields: "vp1": [x, y], "vp2": [x, y], "scale": number,
    "image_size": [w, h] and optionally "pp": [x, y]. "focal" and "vp3"
    are never read; they are always re-derived.
    """
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    pp = tuple(data["pp"]) if "pp" in data and data["pp"] is not None else None
    return complete_calibration(
        vp1=tuple(data["vp1"]),
        vp2=tuple(data["vp2"]),
        scale=float(data["scale"]),
        image_size=tuple(data["image_size"]),
        pp=pp,
    )


def save_calibration(calib: CameraCalibration, path) -> None:
    """Write a calibration file, including the derived focal and vp3."""
    data = {
        "vp1": list(calib.vp1),
        "vp2": list(calib.vp2),
        "pp": list(calib.pp),
        "scale": calib.scale,
        "image_size": list(calib.image_size),
        "focal": calib.focal,
        "vp3": list(calib.vp3),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
