"""3D bounding box parametrization and reconstruction in rectified space.

In the rectified image, 8 of the 12 box edges are axis-aligned. The box
is therefore fully described by its near face (an axis-aligned
rectangle), the finite unused vanishing point VPU and the homothety
ratio k in (0, 1] that scales the near face toward VPU into the far
face.

The detector-facing representation is the enclosing 2D box plus the
parameter cc in [0, 1]: the vertical position of the line containing
the box's top frontal edge inside the 2D box, measured from the top of
the 2D box and divided by its height. With VPU above the box the near
face is the frontal face and the cc line is its top edge; with VPU
below, the near face is the roof and the top frontal edge is its
leading (bottom) edge.
"""

from __future__ import annotations

from dataclasses import dataclass

from .calib import Point
from .errors import DegenerateVPU, InvalidGeometry
from .rectify import RectifiedView, warp_point

# x_min, y_min, x_max, y_max
Box2D = tuple[float, float, float, float]

_REL_TOL = 1e-9


@dataclass(frozen=True)
class CcBox:
    """2D box with the cc parameter and a detection confidence."""

    box: Box2D
    cc: float
    score: float = 1.0


@dataclass(frozen=True)
class Box3DRect:
    """3D bounding box in rectified space: near face + homothety about VPU."""

    near_face: Box2D
    k: float
    vpu: Point

    def far_face(self) -> Box2D:
        vx, vy = self.vpu
        x0, y0, x1, y1 = self.near_face
        k = self.k
        fx0 = vx + k * (x0 - vx)
        fx1 = vx + k * (x1 - vx)
        fy0 = vy + k * (y0 - vy)
        fy1 = vy + k * (y1 - vy)
        return (fx0, fy0, fx1, fy1)

    def vertices(self) -> tuple[Point, ...]:
        """8 vertices: near TL, TR, BR, BL then far TL, TR, BR, BL."""
        x0, y0, x1, y1 = self.near_face
        fx0, fy0, fx1, fy1 = self.far_face()
        return (
            (x0, y0), (x1, y0), (x1, y1), (x0, y1),
            (fx0, fy0), (fx1, fy0), (fx1, fy1), (fx0, fy1),
        )

    def vpu_above(self) -> bool:
        return self.vpu[1] < self.near_face[1]


@dataclass(frozen=True)
class Box3DImage:
    """The 3D box mapped back to the original image.

    Vertex order matches Box3DRect.vertices(): near face TL, TR, BR, BL
    (in rectified orientation) followed by the far face in the same
    order. ``vpu_above`` records on which side of the box the unused VP
    sat in rectified space; it selects the frontal bottom edge.
    """

    vertices: tuple[Point, ...]
    vpu_above: bool


def parametrize(b: Box3DRect) -> CcBox:
    """Enclosing 2D box and cc parameter of a rectified 3D box."""
    x0, y0, x1, y1 = b.near_face
    fx0, fy0, fx1, fy1 = b.far_face()
    bx0, bx1 = min(x0, fx0), max(x1, fx1)
    by0, by1 = min(y0, fy0), max(y1, fy1)
    y_cc = y0 if b.vpu[1] < y0 else y1
    cc = (y_cc - by0) / (by1 - by0)
    return CcBox(box=(bx0, by0, bx1, by1), cc=min(1.0, max(0.0, cc)))


def reconstruct(cb: CcBox, vpu: Point) -> Box3DRect:
    """Invert parametrize(): 3D box from the 2D box, cc and VPU.

    The starting vertex is an end of the cc line segment: the left end
    when VPU is above-right or below-left of the box, the right end in
    the mirrored cases, and (fixed, deterministically) the left end when
    VPU horizontally overlaps the box.

    Raises DegenerateVPU when VPU lies in the vertical span of the box
    and InvalidGeometry when no valid box reproduces the parametrization
    (callers treat such detections as false positives).
    """
    x0, y0, x1, y1 = cb.box
    vx, vy = vpu
    if y0 <= vy <= y1:
        raise DegenerateVPU(f"VPU {vpu} vertically overlaps the box {cb.box}")
    if not (x0 < x1 and y0 < y1):
        raise InvalidGeometry(f"empty 2D box {cb.box}")
    cc = cb.cc
    if not 0.0 <= cc <= 1.0:
        raise InvalidGeometry(f"cc {cc} outside [0, 1]")

    height = y1 - y0
    y_cc = y0 + cc * height
    if vy < y0:
        # VPU above: cc line is the near-face top edge
        k = (y0 - vy) / (y_cc - vy)
        ny0, ny1 = y_cc, y1
    else:
        # VPU below: cc line is the near-face bottom edge
        k = (vy - y1) / (vy - y_cc)
        ny0, ny1 = y0, y_cc

    if vx > x1:
        nx0 = x0
        nx1 = vx + (x1 - vx) / k
    elif vx < x0:
        nx1 = x1
        nx0 = vx + (x0 - vx) / k
    else:
        nx0, nx1 = x0, x1

    tol = _REL_TOL * max(1.0, abs(x0), abs(x1), abs(y0), abs(y1), abs(vx), abs(vy))
    if not (k > 0.0 and k <= 1.0 + _REL_TOL):
        raise InvalidGeometry(f"homothety ratio {k} outside (0, 1]")
    if not (nx1 - nx0 > tol and ny1 - ny0 > tol):
        raise InvalidGeometry("near face collapses")

    box = Box3DRect(near_face=(nx0, ny0, nx1, ny1), k=min(k, 1.0), vpu=(vx, vy))
    check = parametrize(box)
    if (
        max(abs(a - b) for a, b in zip(check.box, cb.box)) > tol
        or abs(check.cc - cc) > _REL_TOL * max(1.0, height)
    ):
        raise InvalidGeometry(
            "reconstructed box does not reproduce the parametrization "
            f"(box {check.box} vs {cb.box}, cc {check.cc} vs {cc})"
        )
    return box


def to_image(b: Box3DRect, view: RectifiedView) -> Box3DImage:
    """Map the 8 vertices back to the original image."""
    hinv = view.H_inv
    verts = tuple(warp_point(hinv, p) for p in b.vertices())
    return Box3DImage(vertices=verts, vpu_above=b.vpu_above())


def reference_point(b: Box3DImage) -> Point:
    """Midpoint of the frontal bottom edge, the vehicle's road contact point.

    When VPU is above the box the near face is a vertical vehicle face
    and its bottom edge (rectified BL-BR) touches the road. When VPU is
    below, the near/far faces are the roof and the ground footprint, so
    the road contact is the leading (larger rectified y) edge of the far
    face instead.
    """
    if b.vpu_above:
        p, q = b.vertices[3], b.vertices[2]
    else:
        p, q = b.vertices[7], b.vertices[6]
    return ((p[0] + q[0]) / 2.0, (p[1] + q[1]) / 2.0)
