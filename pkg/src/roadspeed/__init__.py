"""Vanishing-point road-scene geometry: rectification, 3D boxes from 2D
detections, tracking and speed measurement."""

from .boxgeom import (
    Box3DImage,
    Box3DRect,
    CcBox,
    parametrize,
    reconstruct,
    reference_point,
    to_image,
)
from .calib import (
    CameraCalibration,
    complete_calibration,
    focal_from_vps,
    load_calibration,
    project_to_road,
    road_distance,
    save_calibration,
    third_vp,
)
from .errors import GeometryError
from .labelgen import InstanceMask, LabelRecord, cc_from_mask, generate_labels
from .losses import LossBreakdown, cc_loss, cc_loss_grad, smooth_l1, total_loss
from .pipeline import PipelineReport, process_stream, run_pipeline
from .rectify import RectifiedView, RoadMask, build_rectification
from . import simulate
from .simulate import NoiseModel, SceneCamera, SyntheticScene, make_scene
from .speed import (
    GroundTruthRecord,
    MeasuredTrack,
    VideoMetrics,
    aggregate,
    evaluate,
    interframe_speeds,
    measure_track,
    track_speed,
)
from .track import Detection, Track, Tracker, TrackerConfig, iou, run_tracker

__version__ = "0.1.0"

__all__ = [
    "Box3DImage",
    "Box3DRect",
    "CcBox",
    "CameraCalibration",
    "Detection",
    "GeometryError",
    "GroundTruthRecord",
    "InstanceMask",
    "LabelRecord",
    "LossBreakdown",
    "MeasuredTrack",
    "NoiseModel",
    "PipelineReport",
    "RectifiedView",
    "RoadMask",
    "SceneCamera",
    "SyntheticScene",
    "Track",
    "Tracker",
    "TrackerConfig",
    "VideoMetrics",
    "aggregate",
    "build_rectification",
    "cc_from_mask",
    "cc_loss",
    "cc_loss_grad",
    "complete_calibration",
    "evaluate",
    "focal_from_vps",
    "generate_labels",
    "interframe_speeds",
    "iou",
    "load_calibration",
    "make_scene",
    "measure_track",
    "parametrize",
    "process_stream",
    "project_to_road",
    "reconstruct",
    "reference_point",
    "road_distance",
    "run_pipeline",
    "run_tracker",
    "save_calibration",
    "smooth_l1",
    "third_vp",
    "to_image",
    "total_loss",
    "track_speed",
]
