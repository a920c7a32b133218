"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 geometry failure, 3 I/O or
format failure. Failures print a machine-readable JSON object on
stderr.
"""

from __future__ import annotations

import functools
import json
import os
import sys

import click
import numpy as np

from . import labelgen, losses as losses_mod, pipeline, simulate as sim_mod, speed as speed_mod
from .boxgeom import CcBox
from .calib import load_calibration, save_calibration
from .errors import GeometryError
from .rectify import RectifiedView, RoadMask, build_rectification
from .track import Tracker

# the spec'd convention: usage errors exit 1 (click's default is 2)
click.exceptions.UsageError.exit_code = 1

OUT_SIZES = ("960x540", "640x360", "480x270", "540x960", "360x640", "270x480")


def _fail(kind: str, exc: Exception, code: int):
    json.dump({"error": kind, "type": type(exc).__name__, "message": str(exc)}, sys.stderr)
    sys.stderr.write("\n")
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GeometryError as exc:
            _fail("geometry", exc, 2)
        except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
            _fail("io", exc, 3)

    return wrapper


def _parse_size(text: str) -> tuple[int, int]:
    w, h = text.lower().split("x")
    return (int(w), int(h))


def _load_mask(mask_path, calib):
    return RoadMask.load(mask_path, bounds=calib.image_size)


pair_option = click.option(
    "--pair", type=click.Choice(["vp1vp2", "vp2vp3"]), default="vp2vp3",
    show_default=True, help="Vanishing point pair for the rectification.",
)
out_size_option = click.option(
    "--out-size", default="960x540", show_default=True,
    help="Rectified image size WxH (e.g. 960x540 or 360x640).",
)
crop_step_option = click.option(
    "--crop-step", type=int, default=1, show_default=True,
    help="Rows cropped from the mask bottom per coverage iteration.",
)


@click.group()
def main():
    """Vanishing-point rectification, 3D boxes, tracking and speed measurement."""


@main.command("build-transform")
@click.option("--calib", "calib_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@pair_option
@out_size_option
@crop_step_option
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def build_transform_cmd(calib_path, mask_path, pair, out_size, crop_step, out_path):
    """Construct the perspective transformation and write a view file."""
    calib = load_calibration(calib_path)
    mask = _load_mask(mask_path, calib)
    view = build_rectification(calib, mask, pair, _parse_size(out_size), crop_step)
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(view.to_json(), f, indent=2)
        f.write("\n")
    click.echo(f"coverage {view.coverage:.3f}, crop_rows {view.crop_rows}")


def _load_view(path) -> RectifiedView:
    with open(path, encoding="utf-8") as f:
        return RectifiedView.from_json(json.load(f))


@main.command("gen-labels")
@click.option("--view", "view_path", required=True, type=click.Path(exists=True))
@click.option("--masks", "masks_path", required=True, type=click.Path(exists=True),
              help='JSON-lines: {"frame", "id", "pixels": [[x, y], ...]}')
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def gen_labels_cmd(view_path, masks_path, out_path):
    """Generate (2D box + cc) labels from instance masks."""
    view = _load_view(view_path)
    instances = []
    with open(masks_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            instances.append(labelgen.InstanceMask(
                frame=int(obj["frame"]),
                instance_id=int(obj["id"]),
                pixels=np.asarray(obj["pixels"], dtype=float),
            ))
    records, skipped = labelgen.generate_labels(instances, view)
    with open(out_path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps({
                "frame": r.frame,
                "box": list(r.ccbox.box),
                "cc": r.ccbox.cc,
                "id": r.instance_id,
            }))
            f.write("\n")
    click.echo(f"{len(records)} labels written, skipped: {dict(skipped)}")


@main.command("losses")
@click.option("--labels", "labels_path", required=True, type=click.Path(exists=True))
@click.option("--predictions", "pred_path", required=True, type=click.Path(exists=True),
              help='JSON-lines: {"frame", "box", "cc"} predicted anchors')
@click.option("--iou-threshold", type=float, default=0.5, show_default=True)
@click.option("--l-conf", type=float, default=0.0, show_default=True)
@click.option("--l-loc", type=float, default=0.0, show_default=True)
@handle_errors
def losses_cmd(labels_path, pred_path, iou_threshold, l_conf, l_loc):
    """Compute the cc regression loss of a prediction file against labels."""

    def load(path):
        frames = {}
        with open(path, encoding="utf-8") as f:
            for line in f:
                if not line.strip():
                    continue
                obj = json.loads(line)
                frames.setdefault(int(obj["frame"]), []).append(
                    (tuple(obj["box"]), float(obj["cc"]))
                )
        return frames

    gt_frames = load(labels_path)
    pred_frames = load(pred_path)
    l_c = 0.0
    n_anchors = 0
    for frame, preds in sorted(pred_frames.items()):
        n_anchors += len(preds)
        gts = gt_frames.get(frame, [])
        if not gts:
            continue
        anchors = np.array([b for b, _ in preds])
        gt_boxes = np.array([b for b, _ in gts])
        x = losses_mod.assign_by_iou(anchors, gt_boxes, iou_threshold)
        l_c += losses_mod.cc_loss(
            x, np.array([c for _, c in preds]), np.array([c for _, c in gts])
        )
    breakdown = losses_mod.total_loss(l_conf, l_loc, l_c, max(1, n_anchors))
    click.echo(json.dumps({
        "l_conf": breakdown.l_conf,
        "l_loc": breakdown.l_loc,
        "l_c": breakdown.l_c,
        "l_tot": breakdown.l_tot,
        "n_anchors": n_anchors,
    }))


@main.command("track")
@click.option("--detections", "det_path", required=True, type=click.Path(exists=True))
@click.option("--view", "view_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def track_cmd(det_path, view_path, out_path):
    """Track a rectified detection stream and write tracks as JSON-lines."""
    view = _load_view(view_path)
    _, space, frames = pipeline.read_detections(det_path)
    if space == "original":
        frames = pipeline.warp_frames_to_rectified(frames, view)
    tracker = Tracker()
    for fi, dets in frames:
        tracker.step(fi, dets)
    tracks = tracker.finalize(view.out_size)
    pipeline.write_tracks(out_path, tracks)
    click.echo(f"{len(tracks)} tracks")


@main.command("speed")
@click.option("--calib", "calib_path", required=True, type=click.Path(exists=True))
@click.option("--view", "view_path", required=True, type=click.Path(exists=True))
@click.option("--tracks", "tracks_path", required=True, type=click.Path(exists=True))
@click.option("--fps", type=float, required=True)
@click.option("--gt", "gt_path", type=click.Path(exists=True), default=None)
@click.option("--out", "out_path", required=True, type=click.Path())
@handle_errors
def speed_cmd(calib_path, view_path, tracks_path, fps, gt_path, out_path):
    """Measure speeds for already-built tracks."""
    calib = load_calibration(calib_path)
    view = _load_view(view_path)
    gt = pipeline.read_ground_truth(gt_path) if gt_path else None

    from .track import Detection, Track

    tracks = []
    with open(tracks_path, encoding="utf-8") as f:
        for line in f:
            if not line.strip():
                continue
            obj = json.loads(line)
            t = Track(track_id=int(obj["id"]))
            for d in obj["detections"]:
                t.detections.append(Detection(
                    frame=int(d["frame"]),
                    ccbox=CcBox(box=tuple(d["box"]), cc=float(d["cc"]),
                                score=float(d.get("score", 1.0))),
                ))
            tracks.append(t)

    rows = []
    for t in tracks:
        try:
            ts = speed_mod.measure_track(t, calib, view, fps)
        except Exception:
            continue
        t_cross, lane = pipeline.crossing_time_and_lane(ts, calib, gt, fps)
        rows.append({"id": t.track_id, "speed_kmh": ts.speed_kmh,
                     "crossing_time_s": t_cross, "lane": lane,
                     "n_detections": len(t.detections)})
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump({"fps": fps, "tracks": rows}, f, indent=2)
        f.write("\n")
    click.echo(f"{len(rows)} track speeds")


@main.command("evaluate")
@click.option("--video", "videos", nargs=2, multiple=True, required=True,
              metavar="REPORT GT", help="Report JSON and ground-truth JSON for one video.")
@click.option("--match-window", type=float, default=0.5, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@handle_errors
def evaluate_cmd(videos, match_window, out_path):
    """Evaluate speed reports against ground truth; aggregates across videos."""
    per_video = []
    results = []
    for report_path, gt_path in videos:
        with open(report_path, encoding="utf-8") as f:
            report = json.load(f)
        gt = pipeline.read_ground_truth(gt_path)
        measured = [
            speed_mod.MeasuredTrack(
                track_id=row["id"], speed_kmh=row["speed_kmh"],
                crossing_time_s=row.get("crossing_time_s"), lane=row.get("lane"),
            )
            for row in report["tracks"]
        ]
        metrics = speed_mod.evaluate(measured, gt.vehicles, match_window)
        per_video.append(metrics)
        results.append({"report": report_path, "metrics": metrics.to_json()})
    output = {
        "videos": results,
        "aggregate": speed_mod.aggregate(per_video).to_json(),
    }
    text = json.dumps(output, indent=2)
    if out_path:
        with open(out_path, "w", encoding="utf-8") as f:
            f.write(text + "\n")
    click.echo(text)


@main.command("simulate")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--vehicles", "n_vehicles", type=int, default=20, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--duration", type=float, default=60.0, show_default=True)
@click.option("--fps", type=float, default=50.0, show_default=True)
@click.option("--noise-sigma", type=float, default=0.0, show_default=True,
              help="Gaussian sigma (px) on box corners.")
@click.option("--noise-cc", type=float, default=0.0, show_default=True,
              help="Gaussian sigma (px) on the cc line position.")
@click.option("--dropout", type=float, default=0.0, show_default=True)
@pair_option
@out_size_option
@crop_step_option
@handle_errors
def simulate_cmd(out_dir, n_vehicles, seed, duration, fps, noise_sigma, noise_cc,
                 dropout, pair, out_size, crop_step):
    """Simulate a synthetic scene and write calibration, mask, detections and GT."""
    scene = sim_mod.make_scene(
        n_vehicles=n_vehicles, seed=seed, duration_s=duration,
        noise=sim_mod.NoiseModel(sigma_px=noise_sigma, sigma_cc_px=noise_cc,
                                 dropout=dropout),
    )
    result = sim_mod.simulate(scene, seed=seed, duration_s=duration, fps=fps,
                              pair=pair, out_size=_parse_size(out_size),
                              crop_step=crop_step)
    os.makedirs(out_dir, exist_ok=True)
    save_calibration(result.calib, os.path.join(out_dir, "calibration.json"))
    with open(os.path.join(out_dir, "mask.json"), "w", encoding="utf-8") as f:
        json.dump({"polygon": [list(p) for p in result.mask_polygon]}, f)
        f.write("\n")
    with open(os.path.join(out_dir, "view.json"), "w", encoding="utf-8") as f:
        json.dump(result.view.to_json(), f, indent=2)
        f.write("\n")
    pipeline.write_detections(
        os.path.join(out_dir, "detections.json"),
        [(fd.frame, fd.detections) for fd in result.frames], fps,
    )
    gt = pipeline.GroundTruthFile(
        measurement_line=result.measurement_line,
        lanes=result.lane_polygons,
        vehicles=[
            speed_mod.GroundTruthRecord(
                vehicle_id=v["id"], lane=v["lane"],
                time_s=v["time_s"], speed_kmh=v["speed_kmh"],
            )
            for v in result.ground_truth
        ],
    )
    pipeline.write_ground_truth(os.path.join(out_dir, "gt.json"), gt)
    click.echo(f"simulated {len(result.frames)} frames, "
               f"{sum(len(fd.detections) for fd in result.frames)} detections")


@main.command("run")
@click.option("--calib", "calib_path", required=True, type=click.Path(exists=True))
@click.option("--mask", "mask_path", required=True, type=click.Path(exists=True))
@click.option("--detections", "det_paths", multiple=True, required=True,
              type=click.Path(exists=True))
@click.option("--gt", "gt_paths", multiple=True, type=click.Path(exists=True),
              help="Ground truth per detection file (same order).")
@pair_option
@out_size_option
@crop_step_option
@click.option("--match-window", type=float, default=0.5, show_default=True)
@click.option("--workers", type=int, default=None,
              help="Parallel video workers (default: CPU count).")
@click.option("--out", "out_path", required=True, type=click.Path(),
              help="Report JSON path (suffix _N added for multiple videos).")
@click.option("--csv", "csv_path", type=click.Path(), default=None)
@click.option("--plots", is_flag=True, default=False)
@handle_errors
def run_cmd(calib_path, mask_path, det_paths, gt_paths, pair, out_size, crop_step,
            match_window, workers, out_path, csv_path, plots):
    """Run the full pipeline on one or more detection streams."""
    if gt_paths and len(gt_paths) != len(det_paths):
        raise click.UsageError("--gt count must match --detections count")
    calib = load_calibration(calib_path)
    mask = _load_mask(mask_path, calib)

    jobs = []
    for i, det_path in enumerate(det_paths):
        gt = pipeline.read_ground_truth(gt_paths[i]) if gt_paths else None
        jobs.append((calib, mask, det_path, pair, _parse_size(out_size), crop_step,
                     gt, match_window))

    if len(jobs) > 1 and (workers is None or workers > 1):
        import concurrent.futures

        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(_run_one, jobs))
    else:
        reports = [_run_one(j) for j in jobs]

    for i, report in enumerate(reports):
        suffix = "" if len(reports) == 1 else f"_{i}"
        base, ext = os.path.splitext(out_path)
        pipeline.emit_report(
            report,
            json_path=f"{base}{suffix}{ext or '.json'}",
            csv_path=(f"{os.path.splitext(csv_path)[0]}{suffix}.csv" if csv_path else None),
            plot_path=(f"{base}{suffix}.png" if plots else None),
        )
        click.echo(f"{report.video}: {report.counts['tracks_kept']} tracks")


def _run_one(job):
    calib, mask, det_path, pair, out_size, crop_step, gt, match_window = job
    return pipeline.run_pipeline(
        calib, mask, det_path, pair=pair, out_size=out_size, crop_step=crop_step,
        gt=gt, match_window_s=match_window, video=os.path.basename(str(det_path)),
    )


if __name__ == "__main__":
    main()
