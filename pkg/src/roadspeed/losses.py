"""Reference math for the cc regression target.

No network here: these functions define the assignment-weighted
smooth-L1 loss on the cc parameter and the total-loss combination, for
regression-testing external detectors. Component losses are raw sums;
the 1/N anchor normalization is applied exactly once, in total_loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, ZeroAnchors


@dataclass(frozen=True)
class LossBreakdown:
    l_conf: float
    l_loc: float
    l_c: float
    l_tot: float


def smooth_l1(x: float) -> float:
    """Piecewise smooth L1 with threshold 1: 0.5*x**2 inside, |x| - 0.5 outside."""
    ax = abs(x)
    if ax < 1.0:
        return 0.5 * x * x
    return ax - 0.5


def cc_loss(assignment: np.ndarray, pred: np.ndarray, gt: np.ndarray) -> float:
    """Raw sum over assigned (anchor, ground-truth) pairs of s_L1(pred_i - gt_j)."""
    x = np.asarray(assignment, dtype=float)
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if x.ndim != 2 or x.shape != (len(pred), len(gt)):
        raise DimensionMismatch(
            f"assignment {x.shape} does not match pred ({len(pred)}) x gt ({len(gt)})"
        )
    diff = pred[:, None] - gt[None, :]
    ad = np.abs(diff)
    s = np.where(ad < 1.0, 0.5 * diff * diff, ad - 0.5)
    return float(np.sum(x * s))


def cc_loss_grad(assignment: np.ndarray, pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    """Analytic d(cc_loss)/d(pred), length-N vector."""
    x = np.asarray(assignment, dtype=float)
    pred = np.asarray(pred, dtype=float)
    gt = np.asarray(gt, dtype=float)
    if x.ndim != 2 or x.shape != (len(pred), len(gt)):
        raise DimensionMismatch(
            f"assignment {x.shape} does not match pred ({len(pred)}) x gt ({len(gt)})"
        )
    diff = pred[:, None] - gt[None, :]
    d = np.where(np.abs(diff) < 1.0, diff, np.sign(diff))
    return np.sum(x * d, axis=1)


def total_loss(l_conf: float, l_loc: float, l_c: float, n_anchors: int) -> LossBreakdown:
    """Combine raw component sums and normalize once by the anchor count."""
    if n_anchors <= 0:
        raise ZeroAnchors(f"anchor count must be positive, got {n_anchors}")
    return LossBreakdown(
        l_conf=l_conf,
        l_loc=l_loc,
        l_c=l_c,
        l_tot=(l_conf + l_loc + l_c) / n_anchors,
    )


def assign_by_iou(anchors: np.ndarray, gt_boxes: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Test helper: one-hot assignment of each anchor to its best-IoU gt box.

    Anchors whose best IoU is below the threshold stay unassigned. This
    matching rule is a convenience for exercising cc_loss, not a
    contract of the detector lineage.
    """
    anchors = np.asarray(anchors, dtype=float)
    gt_boxes = np.asarray(gt_boxes, dtype=float)
    n, m = len(anchors), len(gt_boxes)
    x = np.zeros((n, m))
    if n == 0 or m == 0:
        return x
    ix0 = np.maximum(anchors[:, None, 0], gt_boxes[None, :, 0])
    iy0 = np.maximum(anchors[:, None, 1], gt_boxes[None, :, 1])
    ix1 = np.minimum(anchors[:, None, 2], gt_boxes[None, :, 2])
    iy1 = np.minimum(anchors[:, None, 3], gt_boxes[None, :, 3])
    inter = np.clip(ix1 - ix0, 0, None) * np.clip(iy1 - iy0, 0, None)
    area_a = (anchors[:, 2] - anchors[:, 0]) * (anchors[:, 3] - anchors[:, 1])
    area_g = (gt_boxes[:, 2] - gt_boxes[:, 0]) * (gt_boxes[:, 3] - gt_boxes[:, 1])
    union = area_a[:, None] + area_g[None, :] - inter
    iou = np.where(union > 0, inter / union, 0.0)
    best = np.argmax(iou, axis=1)
    keep = iou[np.arange(n), best] >= threshold
    x[np.arange(n)[keep], best[keep]] = 1.0
    return x
