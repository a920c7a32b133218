from collections import Counter

import cv2
import numpy as np
import pytest

from conftest import identity_view
from roadspeed.boxgeom import Box3DRect, parametrize, reconstruct
from roadspeed.errors import DegenerateBox, EmptyMask, VPInsideMask
from roadspeed.labelgen import (
    InstanceMask,
    bbox_of_mask,
    cc_from_mask,
    cc_from_mask_raw,
    generate_labels,
)
from roadspeed.rectify import convex_hull


def test_bbox_examples():
    assert bbox_of_mask([(1, 2), (5, 9)]) == (1, 2, 5, 9)
    with pytest.raises(DegenerateBox):
        bbox_of_mask([(3, 3)])
    with pytest.raises(EmptyMask):
        bbox_of_mask(np.empty((0, 2)))


def test_bbox_matches_brute_force():
    rng = np.random.default_rng(2)
    pts = rng.uniform(-50, 50, size=(200, 2))
    box = bbox_of_mask(pts)
    assert box == pytest.approx(
        (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())
    )


def test_cc_rectangle_vpu_above_center():
    pts = [(10, 10), (20, 10), (10, 20), (20, 20)]
    cb = cc_from_mask(pts, (15, -100))
    assert cb.box == (10, 10, 20, 20)
    assert cb.cc == pytest.approx(0.0, abs=1e-12)


def test_cc_from_mask_vpu_inside():
    pts = [(10, 10), (20, 10), (10, 20), (20, 20)]
    with pytest.raises(VPInsideMask):
        cc_from_mask(pts, (15, 15))


def rasterize_silhouette(box3d, margin=8):
    """Silhouette raster of a rectified 3D box in a shifted local frame."""
    hull = convex_hull(np.array(box3d.vertices()))
    shift = np.floor(hull.min(axis=0)) - margin
    local = hull - shift
    h = int(np.ceil(local[:, 1].max())) + margin
    w = int(np.ceil(local[:, 0].max())) + margin
    raster = np.zeros((h, w), dtype=np.uint8)
    cv2.fillPoly(raster, [np.round(local).astype(np.int32)], 1)
    return raster, shift


def outer_corner_points(raster):
    """Outer corners of the per-row foreground extremes (mask hull points)."""
    rows = np.flatnonzero(raster.any(axis=1))
    pts = []
    for y in rows:
        xs = np.flatnonzero(raster[y])
        x0, x1 = xs[0], xs[-1] + 1
        pts.extend([(x0, y), (x0, y + 1), (x1, y), (x1, y + 1)])
    return np.asarray(pts, dtype=float)


def sample_silhouette_box(rng):
    """A generic-configuration box: VPU well clear of the box, moderate k."""
    w = rng.uniform(60.0, 200.0)
    h = rng.uniform(60.0, 200.0)
    x0 = rng.uniform(300.0, 600.0)
    y0 = rng.uniform(300.0, 600.0)
    k = rng.uniform(0.3, 0.9)
    if rng.random() < 0.5:
        vy = y0 - rng.uniform(150.0, 2500.0)
    else:
        vy = y0 + h + rng.uniform(150.0, 2500.0)
    if rng.random() < 0.5:
        vx = x0 - rng.uniform(350.0, 2500.0)
    else:
        vx = x0 + w + rng.uniform(350.0, 2500.0)
    return Box3DRect(near_face=(x0, y0, x0 + w, y0 + h), k=k, vpu=(vx, vy))


def test_cc_exact_silhouettes():
    rng = np.random.default_rng(17)
    for _ in range(50):
        box3d = sample_silhouette_box(rng)
        truth = parametrize(box3d)
        raster, shift = rasterize_silhouette(box3d)
        pts = outer_corner_points(raster) + shift
        est = cc_from_mask(pts, box3d.vpu)
        assert abs(est.cc - truth.cc) < 0.02
        # the recovered parametrization must reconstruct cleanly
        reconstruct(est, box3d.vpu)


def test_generate_labels_empty():
    records, skipped = generate_labels([], identity_view())
    assert records == []
    assert skipped == Counter()


def _pixels_of(box3d):
    raster, shift = rasterize_silhouette(box3d)
    ys, xs = np.nonzero(raster)
    return np.stack([xs, ys], axis=1) + shift.astype(int)


def test_generate_labels_batch_ordering_and_skips():
    vpu = (1500.0, -900.0)
    view = identity_view(vpu=vpu)
    rng = np.random.default_rng(23)
    masks = []
    for i in range(5):
        box3d = Box3DRect(
            near_face=(200.0 + 40 * i, 300.0, 330.0 + 40 * i, 420.0),
            k=rng.uniform(0.4, 0.8),
            vpu=vpu,
        )
        masks.append(InstanceMask(frame=4 - i, instance_id=i, pixels=_pixels_of(box3d)))
    # an instance containing the VPU in its hull must be skipped
    bad = np.array([(1490, -910), (1510, -910), (1490, -890), (1510, -890)])
    masks.append(InstanceMask(frame=0, instance_id=99, pixels=bad))

    records, skipped = generate_labels(masks, view)
    assert len(records) == 5
    assert skipped["VPInsideMask"] == 1
    keys = [(r.frame, r.instance_id) for r in records]
    assert keys == sorted(keys)
    for r in records:
        assert 0.0 <= r.ccbox.cc <= 1.0


def test_generate_labels_deterministic():
    vpu = (1500.0, -900.0)
    view = identity_view(vpu=vpu)
    box3d = Box3DRect(near_face=(200.0, 300.0, 330.0, 420.0), k=0.6, vpu=vpu)
    masks = [InstanceMask(frame=0, instance_id=0, pixels=_pixels_of(box3d))]
    a = generate_labels(masks, view)
    b = generate_labels(masks, view)
    assert a == b


def test_cc_raw_unclamped_consistency():
    pts = [(10, 10), (20, 10), (10, 20), (20, 20)]
    box, raw = cc_from_mask_raw(pts, (15, -100))
    cb = cc_from_mask(pts, (15, -100))
    assert box == cb.box
    assert cb.cc == min(1.0, max(0.0, raw))
