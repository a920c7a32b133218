"""Exception types raised by the geometry and pipeline code."""


class GeometryError(Exception):
    """Base for all geometric failures (CLI maps these to exit code 2)."""


class NonOrthogonalVPs(GeometryError):
    """No real focal length exists for the given vanishing point pair."""


class VerticalThirdVP(GeometryError):
    """The third vanishing point lies at infinity."""


class HorizonPoint(GeometryError):
    """Pixel at or above the vanishing line of the road plane."""


class VPInsideMask(GeometryError):
    """Tangent construction requires the vanishing point outside the mask hull."""


class ParallelLines(GeometryError):
    """Two lines required to intersect are (numerically) parallel."""


class DegenerateQuad(GeometryError):
    """Four-point homography solve failed (collinear or repeated points)."""


class ConstructionFailure(GeometryError):
    """The rectification construction loop cannot produce a valid view."""


class PointAtInfinity(GeometryError):
    """Point lies on the line the homography maps to infinity."""


class InvalidGeometry(GeometryError):
    """No valid 3D bounding box exists for the given parametrization."""


class DegenerateVPU(GeometryError):
    """VPU lies in the vertical span of the 2D box; reconstruction is undefined."""


class EmptyMask(GeometryError):
    """Mask has no foreground points."""


class DegenerateBox(GeometryError):
    """Bounding box has zero width or height."""


class NonMonotonicFrame(ValueError):
    """Tracker stepped with a frame index not greater than the previous one."""


class InsufficientDetections(ValueError):
    """Fewer than two usable detections survive in a track."""


class DimensionMismatch(ValueError):
    """Loss input dimensions disagree."""


class ZeroAnchors(ValueError):
    """Loss normalization over zero anchors."""


class EmptyList(ValueError):
    """Statistic of an empty sequence requested."""


class SceneConstructionFailure(GeometryError):
    """Synthetic scene cannot be simulated (e.g. rectification fails)."""
