"""Frame-to-frame IoU tracker.

Greedy association in descending IoU order, at most one detection per
track per frame, with the thresholds used for traffic footage: minimum
IoU 0.1, tracks retired after 10 frames without an update, and at
finalization boxes within 10 px of the image border are removed and
tracks with fewer than 5 detections or less than 100 px of travel are
discarded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .boxgeom import Box2D, CcBox
from .errors import NonMonotonicFrame


@dataclass(frozen=True)
class TrackerConfig:
    iou_threshold: float = 0.1
    max_gap_frames: int = 10
    edge_margin_px: float = 10.0
    min_detections: int = 5
    min_travel_px: float = 100.0


@dataclass(frozen=True)
class Detection:
    frame: int
    ccbox: CcBox


@dataclass
class Track:
    track_id: int
    detections: list[Detection] = field(default_factory=list)

    @property
    def last_frame(self) -> int:
        return self.detections[-1].frame

    @property
    def last_box(self) -> Box2D:
        return self.detections[-1].ccbox.box


def iou(a: Box2D, b: Box2D) -> float:
    ix0 = max(a[0], b[0])
    iy0 = max(a[1], b[1])
    ix1 = min(a[2], b[2])
    iy1 = min(a[3], b[3])
    if ix1 <= ix0 or iy1 <= iy0:
        return 0.0
    inter = (ix1 - ix0) * (iy1 - iy0)
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return inter / union


class Tracker:
    """Single-stream sequential tracker state."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.active: list[Track] = []
        self.finished: list[Track] = []
        self._next_id = 0
        self._last_frame: int | None = None

    def step(self, frame: int, detections: list[CcBox]) -> None:
        """Associate one frame's detections with the active tracks."""
        if self._last_frame is not None and frame <= self._last_frame:
            raise NonMonotonicFrame(
                f"frame {frame} not greater than previous {self._last_frame}"
            )
        self._last_frame = frame
        self._retire_stale(frame)

        # all (track, detection) pairs above the IoU threshold, best first;
        # ties broken toward the older (lower-id) track
        pairs = []
        for ti, track in enumerate(self.active):
            last = track.last_box
            for di, det in enumerate(detections):
                v = iou(last, det.box)
                if v > self.cfg.iou_threshold:
                    pairs.append((-v, track.track_id, di, ti))
        pairs.sort()

        used_tracks: set[int] = set()
        used_dets: set[int] = set()
        for _, _, di, ti in pairs:
            if ti in used_tracks or di in used_dets:
                continue
            used_tracks.add(ti)
            used_dets.add(di)
            self.active[ti].detections.append(Detection(frame=frame, ccbox=detections[di]))

        for di, det in enumerate(detections):
            if di not in used_dets:
                track = Track(track_id=self._next_id)
                self._next_id += 1
                track.detections.append(Detection(frame=frame, ccbox=det))
                self.active.append(track)

    def _retire_stale(self, frame: int) -> None:
        still_active = []
        for track in self.active:
            if frame - track.last_frame > self.cfg.max_gap_frames:
                self.finished.append(track)
            else:
                still_active.append(track)
        self.active = still_active

    def finalize(self, image_size: tuple[int, int]) -> list[Track]:
        """Retire everything, drop border boxes, filter short/static tracks."""
        self.finished.extend(self.active)
        self.active = []
        w, h = image_size
        m = self.cfg.edge_margin_px
        result = []
        for track in sorted(self.finished, key=lambda t: t.track_id):
            kept = [
                d for d in track.detections
                if d.ccbox.box[0] >= m and d.ccbox.box[1] >= m
                and d.ccbox.box[2] <= w - m and d.ccbox.box[3] <= h - m
            ]
            if len(kept) < self.cfg.min_detections:
                continue
            first = _center(kept[0].ccbox.box)
            last = _center(kept[-1].ccbox.box)
            if math.dist(first, last) < self.cfg.min_travel_px:
                continue
            result.append(Track(track_id=track.track_id, detections=kept))
        return result


def _center(box: Box2D) -> tuple[float, float]:
    return ((box[0] + box[2]) / 2.0, (box[1] + box[3]) / 2.0)


def run_tracker(
    frames: list[tuple[int, list[CcBox]]],
    image_size: tuple[int, int],
    cfg: TrackerConfig | None = None,
) -> list[Track]:
    """Convenience driver over an ordered (frame, detections) stream."""
    tracker = Tracker(cfg)
    for frame, dets in frames:
        tracker.step(frame, dets)
    return tracker.finalize(image_size)
