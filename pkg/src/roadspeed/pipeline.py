"""Pipeline orchestration and file I/O.

Detections always enter via files (the detector itself stays outside
this artifact); this module wires rectification, tracking and speed
measurement together and reads/writes the JSON formats used by the CLI.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import cv2
import numpy as np

from . import speed as speed_mod
from .boxgeom import CcBox
from .calib import CameraCalibration, Point, project_to_road
from .errors import HorizonPoint, InsufficientDetections
from .rectify import RectifiedView, RoadMask, build_rectification, warp_point
from .speed import GroundTruthRecord, MeasuredTrack, VideoMetrics
from .track import Track, Tracker, TrackerConfig


@dataclass
class GroundTruthFile:
    measurement_line: tuple[Point, Point]
    lanes: dict[int, list[Point]]  # lane id -> polygon, original-image px
    vehicles: list[GroundTruthRecord] = field(default_factory=list)


def write_detections(path, frames, fps: float, coordinate_space: str = "rectified") -> None:
    """frames: iterable of (frame_index, [CcBox, ...]), strictly increasing."""
    data = {
        "fps": fps,
        "coordinate_space": coordinate_space,
        "frames": [
            {
                "frame": fi,
                "detections": [
                    {"box": list(cb.box), "cc": cb.cc, "score": cb.score}
                    for cb in dets
                ],
            }
            for fi, dets in frames
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)
        f.write("\n")


def read_detections(path) -> tuple[float, str, list[tuple[int, list[CcBox]]]]:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    space = data.get("coordinate_space", "rectified")
    if space not in ("rectified", "original"):
        raise ValueError(f"unknown coordinate_space {space!r}")
    frames = []
    last = None
    for fr in data["frames"]:
        fi = int(fr["frame"])
        if last is not None and fi <= last:
            raise ValueError(f"frame indices not strictly increasing at {fi}")
        last = fi
        dets = [
            CcBox(box=tuple(d["box"]), cc=float(d["cc"]), score=float(d.get("score", 1.0)))
            for d in fr["detections"]
        ]
        frames.append((fi, dets))
    return float(data["fps"]), space, frames


def write_ground_truth(path, gt: GroundTruthFile) -> None:
    data = {
        "measurement_line": [list(gt.measurement_line[0]), list(gt.measurement_line[1])],
        "lanes": [
            {"id": lane_id, "polygon": [list(p) for p in poly]}
            for lane_id, poly in sorted(gt.lanes.items())
        ],
        "vehicles": [
            {"id": v.vehicle_id, "lane": v.lane, "time_s": v.time_s, "speed_kmh": v.speed_kmh}
            for v in gt.vehicles
        ],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f)
        f.write("\n")


def read_ground_truth(path) -> GroundTruthFile:
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    line = data["measurement_line"]
    return GroundTruthFile(
        measurement_line=(tuple(line[0]), tuple(line[1])),
        lanes={int(l["id"]): [tuple(p) for p in l["polygon"]] for l in data.get("lanes", [])},
        vehicles=[
            GroundTruthRecord(
                vehicle_id=v["id"],
                lane=v.get("lane"),
                time_s=float(v["time_s"]),
                speed_kmh=float(v["speed_kmh"]),
            )
            for v in data.get("vehicles", [])
        ],
    )


def write_tracks(path, tracks: list[Track]) -> None:
    """JSON-lines track export."""
    with open(path, "w", encoding="utf-8") as f:
        for t in tracks:
            obj = {
                "id": t.track_id,
                "detections": [
                    {
                        "frame": d.frame,
                        "box": list(d.ccbox.box),
                        "cc": d.ccbox.cc,
                        "score": d.ccbox.score,
                    }
                    for d in t.detections
                ],
            }
            f.write(json.dumps(obj))
            f.write("\n")


def warp_frames_to_rectified(frames, view: RectifiedView):
    """Warp original-space 2D boxes into rectified space (corner-wise).

    cc values are space-dependent and are only accepted in rectified
    space, so the input boxes must not carry meaningful cc; they do here
    only as pass-through (validated by the caller).
    """
    out = []
    for fi, dets in frames:
        warped = []
        for cb in dets:
            x0, y0, x1, y1 = cb.box
            pts = [warp_point(view.H, p) for p in
                   [(x0, y0), (x1, y0), (x0, y1), (x1, y1)]]
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            warped.append(CcBox(box=(min(xs), min(ys), max(xs), max(ys)),
                                cc=cb.cc, score=cb.score))
        out.append((fi, warped))
    return out


def crossing_time_and_lane(
    ts: speed_mod.TrackSpeed,
    calib: CameraCalibration,
    gt: GroundTruthFile | None,
    fps: float,
) -> tuple[float | None, int | None]:
    """Interpolated time the road-plane position crosses the measurement line."""
    if gt is None:
        return None, None
    try:
        a = project_to_road(gt.measurement_line[0], calib)
        b = project_to_road(gt.measurement_line[1], calib)
    except HorizonPoint:
        return None, None
    n = calib.normal
    ab = (b[0] - a[0], b[1] - a[1], b[2] - a[2])

    def side(p):
        ap = (p[0] - a[0], p[1] - a[1], p[2] - a[2])
        cx = ab[1] * ap[2] - ab[2] * ap[1]
        cy = ab[2] * ap[0] - ab[0] * ap[2]
        cz = ab[0] * ap[1] - ab[1] * ap[0]
        return n[0] * cx + n[1] * cy + n[2] * cz

    prev = None
    for frame, p in ts.positions:
        s = side(p)
        if prev is not None:
            f0, p0, s0 = prev
            if s0 == 0.0 or (s0 < 0) != (s < 0):
                frac = 0.0 if s == s0 else s0 / (s0 - s)
                t = (f0 + frac * (frame - f0)) / fps
                q = tuple(p0[i] + frac * (p[i] - p0[i]) for i in range(3))
                return t, _lane_of(q, calib, gt)
        prev = (frame, p, s)
    return None, None


def _lane_of(road_point, calib: CameraCalibration, gt: GroundTruthFile) -> int | None:
    if not gt.lanes:
        return None
    img = (
        calib.pp[0] + calib.focal * road_point[0] / road_point[2],
        calib.pp[1] + calib.focal * road_point[1] / road_point[2],
    )
    for lane_id, poly in sorted(gt.lanes.items()):
        contour = np.asarray(poly, dtype=np.float32).reshape(-1, 1, 2)
        if cv2.pointPolygonTest(contour, (float(img[0]), float(img[1])), False) >= 0:
            return lane_id
    return None


@dataclass
class PipelineReport:
    video: str
    fps: float
    vp_pair: str
    out_size: tuple[int, int]
    coverage: float
    counts: dict
    tracks: list[dict]
    metrics: VideoMetrics | None = None

    def to_json(self) -> dict:
        data = {
            "video": self.video,
            "fps": self.fps,
            "vp_pair": self.vp_pair,
            "out_size": list(self.out_size),
            "coverage": self.coverage,
            "counts": self.counts,
            "tracks": self.tracks,
        }
        if self.metrics is not None:
            data["metrics"] = self.metrics.to_json()
        return data


def process_stream(
    calib: CameraCalibration,
    view: RectifiedView,
    frames,
    fps: float,
    gt: GroundTruthFile | None = None,
    tracker_cfg: TrackerConfig | None = None,
    match_window_s: float = 0.5,
    video: str = "",
) -> PipelineReport:
    """Track a rectified detection stream and measure speeds."""
    tracker = Tracker(tracker_cfg)
    n_detections = 0
    for fi, dets in frames:
        tracker.step(fi, dets)
        n_detections += len(dets)
    tracks = tracker.finalize(view.out_size)

    measured: list[MeasuredTrack] = []
    rows = []
    invalid_detections = 0
    dropped_tracks = 0
    for t in tracks:
        positions = speed_mod.road_positions(t, calib, view)
        invalid_detections += len(t.detections) - len(positions)
        if len(positions) < 2:
            dropped_tracks += 1
            continue
        try:
            ts = speed_mod.measure_track(t, calib, view, fps)
        except InsufficientDetections:
            dropped_tracks += 1
            continue
        t_cross, lane = crossing_time_and_lane(ts, calib, gt, fps)
        measured.append(MeasuredTrack(
            track_id=t.track_id, speed_kmh=ts.speed_kmh,
            crossing_time_s=t_cross, lane=lane,
        ))
        rows.append({
            "id": t.track_id,
            "speed_kmh": ts.speed_kmh,
            "crossing_time_s": t_cross,
            "lane": lane,
            "n_detections": len(t.detections),
        })

    metrics = None
    if gt is not None and gt.vehicles:
        metrics = speed_mod.evaluate(measured, gt.vehicles, match_window_s)

    report = PipelineReport(
        video=video,
        fps=fps,
        vp_pair=view.vp_pair,
        out_size=view.out_size,
        coverage=view.coverage,
        counts={
            "frames": len(frames),
            "detections": n_detections,
            "tracks_kept": len(rows),
            "tracks_dropped": dropped_tracks,
            "invalid_geometry_detections": invalid_detections,
        },
        tracks=rows,
    )
    report.metrics = metrics
    return report


def run_pipeline(
    calib: CameraCalibration,
    mask: RoadMask,
    detections_path,
    pair: str = "vp2vp3",
    out_size: tuple[int, int] = (960, 540),
    crop_step: int = 1,
    gt: GroundTruthFile | None = None,
    tracker_cfg: TrackerConfig | None = None,
    match_window_s: float = 0.5,
    video: str = "",
) -> PipelineReport:
    """Full run: rectify, (warp), track, measure, report."""
    fps, space, frames = read_detections(detections_path)
    view = build_rectification(calib, mask, pair, out_size, crop_step)
    if space == "original":
        for _, dets in frames:
            for cb in dets:
                if cb.cc != 0.0:
                    raise ValueError(
                        "cc is rectified-space only; original-space streams must carry cc = 0"
                    )
        frames = warp_frames_to_rectified(frames, view)
    return process_stream(
        calib, view, frames, fps, gt=gt, tracker_cfg=tracker_cfg,
        match_window_s=match_window_s, video=video,
    )


def emit_report(report: PipelineReport, json_path=None, csv_path=None, plot_path=None) -> None:
    """Write the report as JSON and/or CSV, optionally with a speed histogram."""
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as f:
            json.dump(report.to_json(), f, indent=2, sort_keys=True)
            f.write("\n")
    if csv_path is not None:
        with open(csv_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.DictWriter(
                f, fieldnames=["id", "speed_kmh", "crossing_time_s", "lane", "n_detections"]
            )
            writer.writeheader()
            for row in report.tracks:
                writer.writerow(row)
    if plot_path is not None:
        _plot_report(report, plot_path)


def _plot_report(report: PipelineReport, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    speeds = [row["speed_kmh"] for row in report.tracks]
    fig, ax = plt.subplots(figsize=(6, 4))
    if speeds:
        ax.hist(speeds, bins=min(30, max(5, len(speeds))), color="steelblue")
    ax.set_xlabel("measured speed (km/h)")
    ax.set_ylabel("tracks")
    ax.set_title(report.video or "speed distribution")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
