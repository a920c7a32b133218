"""Shared fixtures: a default synthetic scene and its rectified views."""

import numpy as np
import pytest

from roadspeed.boxgeom import Box3DRect
from roadspeed.rectify import RectifiedView, build_rectification
from roadspeed.simulate import SceneGeometry, SyntheticScene, road_mask


@pytest.fixture(scope="session")
def scene():
    return SyntheticScene()


@pytest.fixture(scope="session")
def geom(scene):
    return SceneGeometry(scene.camera)


@pytest.fixture(scope="session")
def calib(geom):
    return geom.calibration()


@pytest.fixture(scope="session")
def mask(scene, geom):
    return road_mask(scene, geom)[0]


@pytest.fixture(scope="session")
def view_vp2vp3(calib, mask):
    return build_rectification(calib, mask, "vp2vp3", (960, 540))


@pytest.fixture(scope="session")
def view_vp1vp2(calib, mask):
    return build_rectification(calib, mask, "vp1vp2", (960, 540))


def identity_view(vpu=(480.0, -500.0), out_size=(960, 540)):
    """A view whose homography is the identity (rectified == original)."""
    return RectifiedView(
        H=np.eye(3), out_size=out_size, vp_pair="vp2vp3", vpu=vpu,
        coverage=1.0, crop_rows=0,
    )


def random_box3d(rng):
    """Random valid rectified 3D box with VPU above or below the box."""
    x0 = rng.uniform(-500.0, 500.0)
    y0 = rng.uniform(-500.0, 500.0)
    near = (x0, y0, x0 + rng.uniform(5.0, 300.0), y0 + rng.uniform(5.0, 300.0))
    k = rng.uniform(0.2, 1.0)
    if rng.random() < 0.5:
        vy = near[1] - rng.uniform(50.0, 3000.0)
    else:
        vy = near[3] + rng.uniform(50.0, 3000.0)
    vx = rng.uniform(-2000.0, 2000.0)
    return Box3DRect(near_face=near, k=k, vpu=(vx, vy))
