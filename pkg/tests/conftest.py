import math

import numpy as np
import pytest

from trajpair.camera import Camera
from trajpair.scene import Scene
from trajpair.shapes import box, floor_quad, quad


def floor_scene(half=50.0):
    return Scene.from_meshes([("floor", floor_quad(-half, -half, half, half))], name="floor")


def looking_down_camera(width=64, height=36, height_m=2.0, fov_deg=60.0):
    """Camera at (0, -3, height_m) looking at the origin."""
    return Camera.look_at((0.0, -3.0, height_m), (0.0, 0.0, 0.0), math.radians(fov_deg), width, height)


def wall_scene():
    """Floor plus a single wall at y = 2 facing -y."""
    wall = quad([(-5, 2, 0), (-5, 2, 3), (5, 2, 3), (5, 2, 0)])
    return Scene.from_meshes([("floor", floor_quad(-5, -5, 5, 5)), ("wall_n", wall)])


def random_soup(rng, n, spread=4.0, size=0.6):
    """n random triangles in a cube; the usual oracle victim."""
    from trajpair.geometry import build_mesh
    c = rng.uniform(-spread, spread, size=(n, 1, 3))
    tri = c + rng.uniform(-size, size, size=(n, 3, 3))
    return build_mesh(tri.reshape(-1, 3), np.arange(3 * n).reshape(n, 3))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def floor():
    return floor_scene()


@pytest.fixture
def cam():
    return looking_down_camera()


# acceptance lines are collected here and echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
