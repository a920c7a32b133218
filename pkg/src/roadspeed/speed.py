"""Track-to-speed conversion and evaluation statistics.

A track's detections are reconstructed into 3D boxes, their frontal
bottom edge midpoints are projected onto the road plane, and the
vehicle speed is the median of the interframe speeds. Evaluation
matches measured tracks one-to-one against ground-truth records by
lane and crossing-time proximity and reports mean / median / 95th
percentile absolute errors plus recall and precision.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

from . import boxgeom
from .calib import CameraCalibration, project_to_road
from .errors import EmptyList, GeometryError, InsufficientDetections
from .rectify import RectifiedView
from .track import Track


@dataclass(frozen=True)
class TrackSpeed:
    track_id: int
    speed_kmh: float
    positions: tuple  # ((frame, (X, Y, Z)), ...) on the road plane
    valid_pairs: int


@dataclass(frozen=True)
class MeasuredTrack:
    """A measured speed with the crossing info needed for evaluation."""

    track_id: int
    speed_kmh: float
    crossing_time_s: float | None
    lane: int | None


@dataclass(frozen=True)
class GroundTruthRecord:
    vehicle_id: int
    lane: int | None
    time_s: float
    speed_kmh: float


@dataclass(frozen=True)
class VideoMetrics:
    mean_abs_err: float
    median_abs_err: float
    p95_abs_err: float
    recall: float
    precision: float

    def to_json(self) -> dict:
        return {
            "mean_abs_err": self.mean_abs_err,
            "median_abs_err": self.median_abs_err,
            "p95_abs_err": self.p95_abs_err,
            "recall": self.recall,
            "precision": self.precision,
        }


def road_positions(
    track: Track, calib: CameraCalibration, view: RectifiedView
) -> list[tuple[int, tuple[float, float, float]]]:
    """Road-plane position of every usable detection in a track.

    Detections whose reconstruction or road projection fails are
    skipped; interframe pairs re-form across the gaps.
    """
    positions = []
    for det in track.detections:
        try:
            box3d = boxgeom.reconstruct(det.ccbox, view.vpu)
            img = boxgeom.to_image(box3d, view)
            ref = boxgeom.reference_point(img)
            positions.append((det.frame, project_to_road(ref, calib)))
        except GeometryError:
            continue
    return positions


def interframe_speeds(
    track: Track, calib: CameraCalibration, view: RectifiedView, fps: float
) -> list[float]:
    """Speed (km/h) between each pair of consecutive usable detections."""
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    positions = road_positions(track, calib, view)
    if len(positions) < 2:
        raise InsufficientDetections(
            f"track {track.track_id}: {len(positions)} usable detections"
        )
    speeds = []
    for (f0, p0), (f1, p1) in zip(positions, positions[1:]):
        dist_m = calib.scale * math.dist(p0, p1)
        speeds.append(3.6 * dist_m * fps / (f1 - f0))
    return speeds


def track_speed(speeds: list[float]) -> float:
    """Median interframe speed of a track."""
    if not speeds:
        raise EmptyList("no interframe speeds")
    return statistics.median(speeds)


def measure_track(
    track: Track, calib: CameraCalibration, view: RectifiedView, fps: float
) -> TrackSpeed:
    positions = road_positions(track, calib, view)
    if len(positions) < 2:
        raise InsufficientDetections(
            f"track {track.track_id}: {len(positions)} usable detections"
        )
    speeds = []
    for (f0, p0), (f1, p1) in zip(positions, positions[1:]):
        dist_m = calib.scale * math.dist(p0, p1)
        speeds.append(3.6 * dist_m * fps / (f1 - f0))
    return TrackSpeed(
        track_id=track.track_id,
        speed_kmh=track_speed(speeds),
        positions=tuple(positions),
        valid_pairs=len(speeds),
    )


def nearest_rank_percentile(values: list[float], fraction: float) -> float:
    """Nearest-rank percentile of a nonempty sequence."""
    if not values:
        raise EmptyList("no values")
    ordered = sorted(values)
    rank = max(1, math.ceil(fraction * len(ordered)))
    return ordered[rank - 1]


def evaluate(
    measured: list[MeasuredTrack],
    gt: list[GroundTruthRecord],
    match_window_s: float = 0.5,
) -> VideoMetrics:
    """Match measured tracks to ground truth and compute error statistics.

    Matching is one-to-one, greedy by smallest crossing-time difference,
    restricted to pairs sharing a lane id (a None lane on either side
    matches any lane) with time difference within the window. With no
    matches the error statistics are 0 by convention.
    """
    pairs = []
    for mi, m in enumerate(measured):
        if m.crossing_time_s is None:
            continue
        for gi, g in enumerate(gt):
            if m.lane is not None and g.lane is not None and m.lane != g.lane:
                continue
            dt = abs(m.crossing_time_s - g.time_s)
            if dt <= match_window_s:
                pairs.append((dt, mi, gi))
    pairs.sort()

    used_m: set[int] = set()
    used_g: set[int] = set()
    errors = []
    for _, mi, gi in pairs:
        if mi in used_m or gi in used_g:
            continue
        used_m.add(mi)
        used_g.add(gi)
        errors.append(abs(measured[mi].speed_kmh - gt[gi].speed_kmh))

    matched = len(errors)
    recall = matched / len(gt) if gt else 0.0
    precision = matched / len(measured) if measured else 0.0
    if errors:
        mean_err = sum(errors) / matched
        median_err = statistics.median(errors)
        p95 = nearest_rank_percentile(errors, 0.95)
    else:
        mean_err = median_err = p95 = 0.0
    return VideoMetrics(
        mean_abs_err=mean_err,
        median_abs_err=median_err,
        p95_abs_err=p95,
        recall=recall,
        precision=precision,
    )


def aggregate(per_video: list[VideoMetrics]) -> VideoMetrics:
    """Unweighted mean of each metric across videos."""
    if not per_video:
        raise EmptyList("no per-video metrics")
    n = len(per_video)
    return VideoMetrics(
        mean_abs_err=sum(v.mean_abs_err for v in per_video) / n,
        median_abs_err=sum(v.median_abs_err for v in per_video) / n,
        p95_abs_err=sum(v.p95_abs_err for v in per_video) / n,
        recall=sum(v.recall for v in per_video) / n,
        precision=sum(v.precision for v in per_video) / n,
    )
