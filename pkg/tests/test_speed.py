import statistics

import numpy as np
import pytest

from roadspeed.errors import EmptyList, InsufficientDetections
from roadspeed.speed import (
    GroundTruthRecord,
    MeasuredTrack,
    VideoMetrics,
    aggregate,
    evaluate,
    interframe_speeds,
    measure_track,
    nearest_rank_percentile,
    track_speed,
)
from roadspeed.simulate import NoiseModel, SyntheticScene, VehicleSpec, simulate
from roadspeed.track import Detection, Track


def simulate_single_vehicle(speed_kmh=80.0, noise=NoiseModel(), fps=50.0):
    veh = VehicleSpec(vehicle_id=0, lane=1, speed_kmh=speed_kmh, entry_time_s=0.0)
    scene = SyntheticScene(vehicles=(veh,), noise=noise)
    return simulate(scene, duration_s=2.0, fps=fps, pair="vp2vp3")


def track_from_result(result, keep=lambda frame: True):
    track = Track(track_id=0)
    for fd in result.frames:
        if fd.detections and keep(fd.frame):
            track.detections.append(Detection(frame=fd.frame, ccbox=fd.detections[0]))
    return track


def test_interframe_speeds_constant_80():
    result = simulate_single_vehicle(80.0)
    track = track_from_result(result)
    assert len(track.detections) >= 10
    speeds = interframe_speeds(track, result.calib, result.view, result.fps)
    for s in speeds:
        assert s == pytest.approx(80.0, abs=1e-6)
    # interframe road distance: 80 km/h at 50 fps is 4/9 m per frame
    ts = measure_track(track, result.calib, result.view, result.fps)
    for (f0, p0), (f1, p1) in zip(ts.positions, ts.positions[1:]):
        d = result.calib.scale * float(np.linalg.norm(np.subtract(p1, p0)))
        assert d == pytest.approx(4.0 / 9.0, abs=1e-6)


def test_skipped_frame_same_speed():
    result = simulate_single_vehicle(80.0)
    track = track_from_result(result, keep=lambda f: f % 2 == 0)
    speeds = interframe_speeds(track, result.calib, result.view, result.fps)
    for s in speeds:
        assert s == pytest.approx(80.0, abs=1e-6)


def test_zero_motion_track():
    result = simulate_single_vehicle(80.0)
    first = track_from_result(result).detections[0]
    track = Track(track_id=0)
    for f in range(5):
        track.detections.append(Detection(frame=f, ccbox=first.ccbox))
    speeds = interframe_speeds(track, result.calib, result.view, result.fps)
    assert speeds == pytest.approx([0.0] * 4, abs=1e-12)


def test_insufficient_detections_and_bad_fps():
    result = simulate_single_vehicle(80.0)
    track = Track(track_id=0)
    with pytest.raises(InsufficientDetections):
        interframe_speeds(track, result.calib, result.view, result.fps)
    with pytest.raises(ValueError):
        interframe_speeds(track, result.calib, result.view, 0.0)


def test_track_speed_median():
    assert track_speed([70.0] * 5) == 70.0
    assert track_speed([10.0, 12.0, 100.0]) == 12.0
    with pytest.raises(EmptyList):
        track_speed([])


def test_scale_linearity(geom):
    result = simulate_single_vehicle(80.0)
    track = track_from_result(result)
    base = measure_track(track, result.calib, result.view, result.fps).speed_kmh
    doubled_calib = geom.calibration(scale=2.0 * result.calib.scale)
    doubled = measure_track(track, doubled_calib, result.view, result.fps).speed_kmh
    assert doubled == pytest.approx(2.0 * base, rel=1e-9)


def test_noisy_track_recovered_within_band():
    result = simulate_single_vehicle(80.0, noise=NoiseModel(sigma_px=0.2, sigma_cc_px=0.2))
    track = track_from_result(result)
    ts = measure_track(track, result.calib, result.view, result.fps)
    assert ts.speed_kmh == pytest.approx(80.0, abs=0.2)


def test_nearest_rank_percentile():
    values = list(range(1, 11))
    assert nearest_rank_percentile(values, 0.95) == 10
    assert nearest_rank_percentile(values, 0.5) == 5
    assert nearest_rank_percentile([42.0], 0.95) == 42.0
    with pytest.raises(EmptyList):
        nearest_rank_percentile([], 0.5)


def _measured(tid, speed, t, lane=0):
    return MeasuredTrack(track_id=tid, speed_kmh=speed, crossing_time_s=t, lane=lane)


def _gt(vid, speed, t, lane=0):
    return GroundTruthRecord(vehicle_id=vid, lane=lane, time_s=t, speed_kmh=speed)


def test_evaluate_exact_match():
    gt = [_gt(i, 100.0 - i, 10.0 * i) for i in range(3)]
    measured = [_measured(i, 100.0 - i, 10.0 * i) for i in range(3)]
    m = evaluate(measured, gt)
    assert m == VideoMetrics(0.0, 0.0, 0.0, 1.0, 1.0)


def test_evaluate_empty_measured():
    gt = [_gt(0, 100.0, 10.0)]
    m = evaluate([], gt)
    assert m.recall == 0.0
    assert m.precision == 0.0
    assert m.mean_abs_err == 0.0


def test_evaluate_hand_fixture():
    gt = [
        _gt(0, 100.0, 10.0), _gt(1, 90.0, 20.0), _gt(2, 80.0, 30.0),
        _gt(3, 70.0, 40.0), _gt(4, 60.0, 50.0),
    ]
    measured = [
        _measured(0, 101.0, 10.1),   # error 1.0
        _measured(1, 92.0, 20.2),    # error 2.0
        _measured(2, 83.5, 29.9),    # error 3.5
        _measured(3, 55.0, 49.8),    # matches GT 4, error 5.0
    ]
    m = evaluate(measured, gt)
    assert m.mean_abs_err == pytest.approx(2.875, abs=1e-12)
    assert m.median_abs_err == pytest.approx(2.75, abs=1e-12)
    assert m.p95_abs_err == pytest.approx(5.0, abs=1e-12)
    assert m.recall == pytest.approx(0.8)
    assert m.precision == pytest.approx(1.0)


def test_evaluate_lane_and_window_rules():
    gt = [_gt(0, 100.0, 10.0, lane=2)]
    # a None lane is a wildcard
    m = evaluate([MeasuredTrack(0, 99.0, 10.1, None)], gt)
    assert m.recall == 1.0
    # differing lanes never match
    m = evaluate([_measured(0, 99.0, 10.1, lane=1)], gt)
    assert m.recall == 0.0
    # outside the time window never matches
    m = evaluate([_measured(0, 99.0, 10.6, lane=2)], gt)
    assert m.recall == 0.0
    # missing crossing time never matches
    m = evaluate([MeasuredTrack(0, 99.0, None, 2)], gt)
    assert m.recall == 0.0


def test_aggregate():
    a = VideoMetrics(1.0, 0.8, 2.0, 0.9, 1.0)
    b = VideoMetrics(2.0, 1.2, 4.0, 0.7, 0.8)
    assert aggregate([a]) == a
    agg = aggregate([a, b])
    assert agg == VideoMetrics(1.5, 1.0, 3.0, 0.8, 0.9)
    assert aggregate([b, a]) == agg
    with pytest.raises(EmptyList):
        aggregate([])


def test_p95_at_least_median_property():
    rng = np.random.default_rng(12)
    for _ in range(2000):
        values = rng.uniform(0, 10, size=rng.integers(1, 40)).tolist()
        assert nearest_rank_percentile(values, 0.95) >= statistics.median(values)
