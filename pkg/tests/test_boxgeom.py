import math

import numpy as np
import pytest

from conftest import identity_view, random_box3d
from roadspeed.boxgeom import (
    Box3DImage,
    Box3DRect,
    CcBox,
    parametrize,
    reconstruct,
    reference_point,
    to_image,
)
from roadspeed.calib import project_to_road
from roadspeed.errors import DegenerateVPU, InvalidGeometry
from roadspeed.rectify import Line, warp_point
from roadspeed.simulate import SceneGeometry, SyntheticScene, VehicleSpec, simulate


def test_parametrize_flat_box():
    b = Box3DRect(near_face=(10, 10, 50, 40), k=1.0, vpu=(30, -200))
    cb = parametrize(b)
    assert cb.box == pytest.approx((10, 10, 50, 40))
    assert cb.cc == 0.0


def test_parametrize_example_against_vertex_hull():
    b = Box3DRect(near_face=(10, 10, 50, 40), k=0.5, vpu=(-100, -100))
    assert b.far_face() == pytest.approx((-45, -45, -25, -30))
    cb = parametrize(b)
    verts = np.array(b.vertices())
    assert cb.box == pytest.approx(
        (verts[:, 0].min(), verts[:, 1].min(), verts[:, 0].max(), verts[:, 1].max())
    )
    # VPU above: the cc line is the near-face top edge y = 10
    assert cb.cc == pytest.approx((10 - (-45)) / (40 - (-45)), rel=1e-12)


def test_parametrize_mirror_invariance():
    rng = np.random.default_rng(5)
    for _ in range(100):
        b = random_box3d(rng)
        x0, y0, x1, y1 = b.near_face
        mirrored = Box3DRect(
            near_face=(-x1, y0, -x0, y1), k=b.k, vpu=(-b.vpu[0], b.vpu[1])
        )
        assert parametrize(mirrored).cc == pytest.approx(parametrize(b).cc, abs=1e-12)


def test_round_trip_random():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        b = random_box3d(rng)
        back = reconstruct(parametrize(b), b.vpu)
        err = max(
            max(abs(pa - qa), abs(pb - qb))
            for (pa, pb), (qa, qb) in zip(b.vertices(), back.vertices())
        )
        assert err < 1e-6


def test_reconstruct_cc_zero_above_gives_flat_box():
    cb = CcBox(box=(10, 10, 50, 40), cc=0.0)
    b = reconstruct(cb, (30, -200))
    assert b.k == 1.0
    assert b.near_face == pytest.approx(cb.box)


def test_reconstruct_cc_one_below_gives_flat_box():
    cb = CcBox(box=(10, 10, 50, 40), cc=1.0)
    b = reconstruct(cb, (30, 300))
    assert b.k == 1.0
    assert b.near_face == pytest.approx(cb.box)


def test_reconstruct_degenerate_vpu():
    with pytest.raises(DegenerateVPU):
        reconstruct(CcBox(box=(10, 10, 50, 40), cc=0.5), (200, 25))


def test_reconstruct_invalid_geometry_endpoints():
    # found by scanning cc over (0, 1) for a fixed box and near VPU: the
    # near face collapses at cc = 1 (VPU above) and cc = 0 (VPU below)
    with pytest.raises(InvalidGeometry):
        reconstruct(CcBox(box=(10, 10, 50, 40), cc=1.0), (60, 5))
    with pytest.raises(InvalidGeometry):
        reconstruct(CcBox(box=(10, 10, 50, 40), cc=0.0), (60, 45))
    with pytest.raises(InvalidGeometry):
        reconstruct(CcBox(box=(10, 10, 50, 40), cc=1.5), (30, -200))
    with pytest.raises(InvalidGeometry):
        reconstruct(CcBox(box=(50, 40, 10, 10), cc=0.5), (30, -200))


def test_to_image_identity_view():
    b = Box3DRect(near_face=(100, 100, 200, 180), k=0.6, vpu=(150, -400))
    img = to_image(b, identity_view())
    assert np.allclose(img.vertices, b.vertices(), atol=1e-9)
    assert img.vpu_above


def test_to_image_round_trip(view_vp2vp3):
    b = Box3DRect(near_face=(300, 250, 420, 330), k=0.7, vpu=view_vp2vp3.vpu)
    img = to_image(b, view_vp2vp3)
    for orig, v in zip(b.vertices(), img.vertices):
        assert warp_point(view_vp2vp3.H, v) == pytest.approx(orig, abs=1e-6)


def test_to_image_edges_concur_at_unused_vp(calib, view_vp2vp3):
    # near-to-far vertex edges meet at the unused VP in the original image
    b = Box3DRect(near_face=(300, 250, 420, 330), k=0.7, vpu=view_vp2vp3.vpu)
    img = to_image(b, view_vp2vp3)
    unused = calib.vp1
    for i in range(4):
        line = Line.through(img.vertices[i], img.vertices[i + 4])
        assert abs(line.side(unused)) < 1e-6 * max(1.0, math.hypot(*unused))


def _box_image(vertices, vpu_above=True):
    return Box3DImage(vertices=tuple(vertices), vpu_above=vpu_above)


def test_reference_point_translation_and_mirror():
    rng = np.random.default_rng(9)
    verts = [tuple(v) for v in rng.uniform(0, 500, size=(8, 2))]
    for vpu_above in (True, False):
        ref = reference_point(_box_image(verts, vpu_above))
        shifted = [(x + 13.0, y - 4.5) for x, y in verts]
        ref2 = reference_point(_box_image(shifted, vpu_above))
        assert ref2 == pytest.approx((ref[0] + 13.0, ref[1] - 4.5), abs=1e-12)
        mirrored = [(-x, y) for x, y in verts]
        ref3 = reference_point(_box_image(mirrored, vpu_above))
        assert ref3 == pytest.approx((-ref[0], ref[1]), abs=1e-12)


@pytest.mark.parametrize("pair", ["vp1vp2", "vp2vp3"])
def test_reference_point_synthetic_oracle(pair):
    # the reference point of every reconstructed detection must back-project
    # onto the front-bumper ground line of the true vehicle (the warp does
    # not preserve midpoints, so only the lateral position may drift)
    veh = VehicleSpec(vehicle_id=0, lane=1, speed_kmh=80.0, entry_time_s=0.0)
    scene = SyntheticScene(vehicles=(veh,))
    geom = SceneGeometry(scene.camera)
    result = simulate(scene, duration_s=2.0, fps=25.0, pair=pair)
    calib = result.calib
    y_far = scene.road_y_range_m[1]
    checked = 0
    for fd in result.frames:
        if not fd.detections:
            continue
        t = fd.frame / result.fps
        y_front = y_far - (veh.speed_kmh / 3.6) * t
        box3d = reconstruct(fd.detections[0], result.view.vpu)
        ref = reference_point(to_image(box3d, result.view))
        # back-project to world coordinates (road plane z = 0)
        p = np.array(project_to_road(ref, calib))
        d = geom.R.T @ p
        world = geom.center + (-geom.center[2] / d[2]) * d
        assert world[2] == pytest.approx(0.0, abs=1e-9)
        assert world[1] == pytest.approx(y_front, abs=1e-6)
        assert abs(world[0]) <= veh.width_m / 2 + 1e-6
        checked += 1
    assert checked > 5
