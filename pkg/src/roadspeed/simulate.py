"""Synthetic calibrated-scene simulator.

Builds an exact pinhole camera over a straight road, derives the
vanishing points analytically, and renders constant-speed vehicles into
a detection stream (enclosing 2D box + cc in rectified space) together
with ground-truth speed records and the true 3D boxes. In noiseless
mode every emitted detection is exactly the parametrization of the true
3D box, so the downstream pipeline can be checked end to end.

World frame: road plane z = 0, travel along -y (vehicles approach the
camera), camera at (0, 0, height) looking down the road.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import boxgeom
from .boxgeom import Box3DRect, CcBox
from .calib import CameraCalibration, Point, complete_calibration
from .errors import ConstructionFailure, SceneConstructionFailure
from .rectify import RectifiedView, RoadMask, build_rectification, warp_point


@dataclass(frozen=True)
class SceneCamera:
    image_size: tuple[int, int] = (1920, 1080)
    focal_px: float = 1000.0
    height_m: float = 12.0
    pitch_deg: float = 25.0
    yaw_deg: float = 5.0
    roll_deg: float = 1.0


@dataclass(frozen=True)
class LaneSpec:
    lane_id: int
    center_x_m: float
    width_m: float = 4.0


@dataclass(frozen=True)
class VehicleSpec:
    vehicle_id: int
    lane: int
    speed_kmh: float
    entry_time_s: float
    length_m: float = 4.5
    width_m: float = 1.8
    height_m: float = 1.5


@dataclass(frozen=True)
class NoiseModel:
    sigma_px: float = 0.0  # Gaussian sigma on 2D box corners, rectified px
    sigma_cc_px: float = 0.0  # Gaussian sigma on the cc line position, rectified px
    dropout: float = 0.0  # per-detection dropout probability


@dataclass(frozen=True)
class SyntheticScene:
    camera: SceneCamera = SceneCamera()
    lanes: tuple[LaneSpec, ...] = (
        LaneSpec(0, -4.0), LaneSpec(1, 0.0), LaneSpec(2, 4.0),
    )
    vehicles: tuple[VehicleSpec, ...] = ()
    road_y_range_m: tuple[float, float] = (36.0, 58.0)
    measurement_line_y_m: float = 41.0
    noise: NoiseModel = NoiseModel()
    scale_m_per_unit: float | None = None  # defaults to the camera height


class SceneGeometry:
    """Exact projective geometry of a synthetic scene."""

    def __init__(self, camera: SceneCamera):
        self.camera = camera
        w, h = camera.image_size
        self.pp = (w / 2.0, h / 2.0)
        self.f = camera.focal_px
        self.center = np.array([0.0, 0.0, camera.height_m])
        self.R = _camera_rotation(camera)

    def project(self, p_world) -> Point:
        pc = self.R @ (np.asarray(p_world, dtype=float) - self.center)
        if pc[2] <= 1e-9:
            raise SceneConstructionFailure(f"world point {p_world} behind the camera")
        return (self.pp[0] + self.f * pc[0] / pc[2], self.pp[1] + self.f * pc[1] / pc[2])

    def vanishing_point(self, direction) -> Point:
        d = self.R @ np.asarray(direction, dtype=float)
        if abs(d[2]) < 1e-12:
            raise SceneConstructionFailure(f"direction {direction} has no finite VP")
        return (self.pp[0] + self.f * d[0] / d[2], self.pp[1] + self.f * d[1] / d[2])

    def calibration(self, scale: float | None = None) -> CameraCalibration:
        vp1 = self.vanishing_point((0.0, 1.0, 0.0))
        vp2 = self.vanishing_point((1.0, 0.0, 0.0))
        if scale is None:
            scale = self.camera.height_m
        return complete_calibration(
            vp1=vp1, vp2=vp2, scale=scale,
            image_size=self.camera.image_size, pp=self.pp,
        )


def _camera_rotation(camera: SceneCamera) -> np.ndarray:
    """World-to-camera rotation: x right, y down, z forward along the road."""
    base = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 0.0, -1.0],
        [0.0, 1.0, 0.0],
    ])
    th = math.radians(camera.pitch_deg)
    rx = np.array([
        [1, 0, 0],
        [0, math.cos(th), -math.sin(th)],
        [0, math.sin(th), math.cos(th)],
    ])
    ph = math.radians(camera.yaw_deg)
    ry = np.array([
        [math.cos(ph), 0, math.sin(ph)],
        [0, 1, 0],
        [-math.sin(ph), 0, math.cos(ph)],
    ])
    ps = math.radians(camera.roll_deg)
    rz = np.array([
        [math.cos(ps), -math.sin(ps), 0],
        [math.sin(ps), math.cos(ps), 0],
        [0, 0, 1],
    ])
    return rz @ rx @ ry @ base


@dataclass
class FrameDetections:
    frame: int
    detections: list[CcBox] = field(default_factory=list)


@dataclass
class SimulationResult:
    calib: CameraCalibration
    view: RectifiedView
    mask_polygon: list[Point]
    fps: float
    frames: list[FrameDetections]
    ground_truth: list[dict]
    measurement_line: tuple[Point, Point]
    lane_polygons: dict[int, list[Point]]
    true_boxes: dict[int, list[boxgeom.Box3DImage]]  # frame -> boxes


def road_mask(scene: SyntheticScene, geom: SceneGeometry) -> tuple[RoadMask, list[Point]]:
    y0, y1 = scene.road_y_range_m
    half = max(l.center_x_m + l.width_m / 2 for l in scene.lanes)
    low = min(l.center_x_m - l.width_m / 2 for l in scene.lanes)
    polygon = [
        geom.project((low, y0, 0.0)),
        geom.project((half, y0, 0.0)),
        geom.project((half, y1, 0.0)),
        geom.project((low, y1, 0.0)),
    ]
    return RoadMask.from_polygon(polygon, geom.camera.image_size), polygon


def _lane_polygon(scene: SyntheticScene, geom: SceneGeometry, lane: LaneSpec) -> list[Point]:
    y0, y1 = scene.road_y_range_m
    x0 = lane.center_x_m - lane.width_m / 2
    x1 = lane.center_x_m + lane.width_m / 2
    return [
        geom.project((x0, y0, 0.0)),
        geom.project((x1, y0, 0.0)),
        geom.project((x1, y1, 0.0)),
        geom.project((x0, y1, 0.0)),
    ]


def _vehicle_corners(xc: float, y_front: float, spec: VehicleSpec) -> np.ndarray:
    """World corners of the cuboid; the vehicle drives toward -y."""
    x0, x1 = xc - spec.width_m / 2, xc + spec.width_m / 2
    y_rear = y_front + spec.length_m
    return np.array([
        [x0, y_front, 0.0], [x1, y_front, 0.0],
        [x1, y_rear, 0.0], [x0, y_rear, 0.0],
        [x0, y_front, spec.height_m], [x1, y_front, spec.height_m],
        [x1, y_rear, spec.height_m], [x0, y_rear, spec.height_m],
    ])


def true_box_rect(
    rect_pts: np.ndarray, world_pts: np.ndarray, view: RectifiedView
) -> Box3DRect:
    """Fit the exact Box3DRect to the rectified images of the 8 corners.

    The two cuboid faces that rectify to axis-aligned rectangles are the
    ones perpendicular to the VPU direction: front/rear (constant y) for
    the pair vp2-vp3, bottom/top (constant z) for vp1-vp2.
    """
    if view.vp_pair == "vp2vp3":
        key = world_pts[:, 1]
    else:
        key = world_pts[:, 2]
    lo = key < (key.min() + key.max()) / 2
    face_a = rect_pts[lo]
    face_b = rect_pts[~lo]

    def rect(pts):
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())

    ra, rb = rect(face_a), rect(face_b)
    if ra[2] - ra[0] >= rb[2] - rb[0]:
        near, far = ra, rb
    else:
        near, far = rb, ra
    vx, vy = view.vpu
    k = (far[1] - vy) / (near[1] - vy)
    return Box3DRect(near_face=near, k=min(k, 1.0), vpu=view.vpu)


def make_scene(
    n_vehicles: int = 20,
    seed: int = 0,
    duration_s: float = 60.0,
    speed_range_kmh: tuple[float, float] = (60.0, 130.0),
    camera: SceneCamera = SceneCamera(),
    noise: NoiseModel = NoiseModel(),
) -> SyntheticScene:
    """Populate a default scene with randomly drawn vehicles.

    Entry times are spread over the duration with per-lane jitter so
    vehicles in the same lane stay separated.
    """
    rng = np.random.default_rng(seed)
    base = SyntheticScene(camera=camera, noise=noise)
    lanes = [l.lane_id for l in base.lanes]
    road_len = base.road_y_range_m[1] - base.road_y_range_m[0]
    vehicles = []
    for i in range(n_vehicles):
        speed = float(rng.uniform(*speed_range_kmh))
        transit = road_len / (speed / 3.6)
        entry = (i / max(1, n_vehicles)) * max(0.0, duration_s - transit)
        entry += float(rng.uniform(0.0, 0.2))
        vehicles.append(VehicleSpec(
            vehicle_id=i,
            lane=lanes[i % len(lanes)],
            speed_kmh=speed,
            entry_time_s=entry,
        ))
    return SyntheticScene(camera=camera, vehicles=tuple(vehicles), noise=noise)


def simulate(
    scene: SyntheticScene,
    seed: int = 0,
    duration_s: float = 10.0,
    fps: float = 50.0,
    pair: str = "vp2vp3",
    out_size: tuple[int, int] = (960, 540),
    crop_step: int = 1,
) -> SimulationResult:
    """Render the scene into detections, ground truth and true boxes."""
    geom = SceneGeometry(scene.camera)
    calib = geom.calibration(scene.scale_m_per_unit)
    mask, polygon = road_mask(scene, geom)
    try:
        view = build_rectification(calib, mask, pair, out_size, crop_step)
    except ConstructionFailure as exc:
        raise SceneConstructionFailure(f"rectification failed for scene: {exc}") from exc

    rng = np.random.default_rng(seed)
    lanes = {l.lane_id: l for l in scene.lanes}
    y_near, y_far = scene.road_y_range_m
    w_out, h_out = view.out_size

    frames: list[FrameDetections] = []
    true_boxes: dict[int, list[boxgeom.Box3DImage]] = {}
    n_frames = int(round(duration_s * fps))
    for fi in range(n_frames):
        t = fi / fps
        fd = FrameDetections(frame=fi)
        for veh in scene.vehicles:
            lane = lanes[veh.lane]
            v_mps = veh.speed_kmh / 3.6
            y_front = y_far - v_mps * (t - veh.entry_time_s)
            if t < veh.entry_time_s or y_front < y_near or y_front + veh.length_m > y_far:
                continue
            world = _vehicle_corners(lane.center_x_m, y_front, veh)
            img_pts = np.array([geom.project(p) for p in world])
            rect_pts = np.array([warp_point(view.H, tuple(p)) for p in img_pts])
            box3d = true_box_rect(rect_pts, world, view)
            cb = boxgeom.parametrize(box3d)
            x0, y0, x1, y1 = cb.box
            if not (0 <= x0 and x1 <= w_out and 0 <= y0 and y1 <= h_out):
                continue
            true_boxes.setdefault(fi, []).append(
                boxgeom.Box3DImage(
                    vertices=tuple(tuple(p) for p in img_pts),
                    vpu_above=box3d.vpu_above(),
                )
            )
            cb = _apply_noise(cb, scene.noise, rng)
            if cb is not None:
                fd.detections.append(cb)
        frames.append(fd)

    measurement_line = (
        geom.project((min(l.center_x_m - l.width_m / 2 for l in scene.lanes),
                      scene.measurement_line_y_m, 0.0)),
        geom.project((max(l.center_x_m + l.width_m / 2 for l in scene.lanes),
                      scene.measurement_line_y_m, 0.0)),
    )
    ground_truth = []
    for veh in scene.vehicles:
        v_mps = veh.speed_kmh / 3.6
        t_cross = veh.entry_time_s + (y_far - scene.measurement_line_y_m) / v_mps
        ground_truth.append({
            "id": veh.vehicle_id,
            "lane": veh.lane,
            "time_s": t_cross,
            "speed_kmh": veh.speed_kmh,
        })

    lane_polygons = {l.lane_id: _lane_polygon(scene, geom, l) for l in scene.lanes}
    return SimulationResult(
        calib=calib,
        view=view,
        mask_polygon=polygon,
        fps=fps,
        frames=frames,
        ground_truth=ground_truth,
        measurement_line=measurement_line,
        lane_polygons=lane_polygons,
        true_boxes=true_boxes,
    )


def _apply_noise(cb: CcBox, noise: NoiseModel, rng: np.random.Generator) -> CcBox | None:
    if noise.dropout > 0 and rng.random() < noise.dropout:
        return None
    if noise.sigma_px <= 0 and noise.sigma_cc_px <= 0:
        return cb
    x0, y0, x1, y1 = cb.box
    if noise.sigma_px > 0:
        dx0, dy0, dx1, dy1 = rng.normal(0.0, noise.sigma_px, size=4)
        x0, y0, x1, y1 = x0 + dx0, y0 + dy0, x1 + dx1, y1 + dy1
        if x1 <= x0 or y1 <= y0:
            return None
    cc = cb.cc
    if noise.sigma_cc_px > 0:
        cc = cc + rng.normal(0.0, noise.sigma_cc_px) / (y1 - y0)
    cc = min(1.0, max(0.0, cc))
    return CcBox(box=(x0, y0, x1, y1), cc=cc, score=cb.score)
