import math

import numpy as np
import pytest

from trajpair.camera import Camera, pixel_ray, screen_bbox
from trajpair.geometry import clearance, ray_cast
from trajpair.physics import TaskKind
from trajpair.placement import (
    NoValidPlacementError,
    Placement,
    PlacementConstraints,
    PlacementMode,
    choose_scale,
    coupled_depth,
    proxy_radius,
    sample_air_placement,
    sample_ground_placement,
    sample_pair,
    validate_placement,
)
from trajpair.scene import Scene
from trajpair.shapes import box, cube, floor_quad, icosphere, quad

from conftest import floor_scene, looking_down_camera, wall_scene

UP = np.array([0.0, 0.0, 1.0])


def test_air_depth_band(floor, cam, rng):
    for _ in range(50):
        p = sample_air_placement(rng, floor, cam, 0.05)
        hit = ray_cast(floor.bvh, pixel_ray(cam, *p.pixel))
        assert 0.2 * hit.t <= p.depth <= 0.8 * hit.t
        np.testing.assert_allclose(p.position, pixel_ray(cam, *p.pixel).at(p.depth))
        assert clearance(floor.bvh, p.position, 0.05) >= 0.02


def test_air_miss_range():
    # camera looking at the sky: every ray misses the floor
    cam = Camera.look_at((0, 0, 1), (0, 5, 4), math.radians(40), 32, 18)
    p = sample_air_placement(np.random.default_rng(0), floor_scene(), cam, 0.05)
    assert 0.5 <= p.depth <= 4.0


def test_air_deterministic(floor, cam):
    a = sample_air_placement(np.random.default_rng(9), floor, cam, 0.05)
    b = sample_air_placement(np.random.default_rng(9), floor, cam, 0.05)
    assert a.pixel == b.pixel and a.depth == b.depth


def test_oversized_proxy_fails():
    scene = Scene.from_meshes([("floor", floor_quad(-3, -3, 3, 3)), ("wall_n", quad([(-3, 3, 0), (-3, 3, 3), (3, 3, 3), (3, 3, 0)]))])
    cam = Camera.look_at((0, -2.5, 1.5), (0, 0, 0.5), math.radians(60), 32, 18)
    c = PlacementConstraints(retry_budget=32)
    with pytest.raises(NoValidPlacementError):
        sample_air_placement(np.random.default_rng(0), scene, cam, 50.0, c)


def test_ground_on_flat_floor(floor, cam, rng):
    for _ in range(50):
        p = sample_ground_placement(rng, floor, cam, 0.07)
        np.testing.assert_allclose(p.support_normal, UP)
        assert p.position[2] == pytest.approx(0.07, abs=1e-6)


def test_ground_needs_upward_surface():
    wall = quad([(-5, 2, 0), (-5, 2, 3), (5, 2, 3), (5, 2, 0)])
    scene = Scene.from_meshes([("wall", wall)])
    cam = Camera.look_at((0, -1, 1.5), (0, 2, 1.5), math.radians(40), 32, 18)
    with pytest.raises(NoValidPlacementError):
        sample_ground_placement(np.random.default_rng(0), scene, cam, 0.05, PlacementConstraints(retry_budget=64))


def test_ground_on_tabletop_clears_everything():
    scene = Scene.from_meshes([("floor", floor_quad(-5, -5, 5, 5)), ("table", box((-0.6, -0.6, 0), (0.6, 0.6, 0.75)))])
    cam = Camera.look_at((0, -1.2, 2.0), (0, 0, 0.75), math.radians(40), 48, 27)
    rng = np.random.default_rng(3)
    on_table = 0
    for _ in range(40):
        p = sample_ground_placement(rng, scene, cam, 0.06)
        assert clearance(scene.bvh, p.position, 0.06) >= -1e-6
        on_table += abs(p.support_point[2] - 0.75) < 1e-9
    assert on_table > 0


def test_placement_invariants():
    with pytest.raises(ValueError):
        Placement((0, 0, 1), "ground", (0, 0), 1.0, None)
    with pytest.raises(ValueError):
        Placement((0, 0, 1), "ground", (0, 0), 1.0, np.array([0, 0.5, 0.5]) / math.sqrt(0.5))
    with pytest.raises(ValueError):
        Placement((0, 0, 1), "air", (0, 0), 1.0, UP)


def test_validate_reports_first_failure():
    scene = wall_scene()
    cam = Camera.look_at((0, -3, 1.5), (0, 0, 0.5), math.radians(60), 64, 36)
    mesh = cube(1.0)
    behind = Placement((0, 3, 1), "air", (0, 0), 6.0)
    assert validate_placement(scene, cam, mesh, behind, 0.2).failed == "visibility"
    sunk = Placement((0, 0, 0.05), "air", (0, 0), 3.0)
    assert validate_placement(scene, cam, mesh, sunk, 0.2).failed == "clearance"
    rest = Placement((0, 0, 0.1), "ground", (0, 0), 3.0, UP, np.zeros(3))
    res = validate_placement(scene, cam, mesh, rest, 0.2)
    assert res.ok and res.failed is None and bool(res)
    tilted = Placement((0, 0, 0.1), "ground", (0, 0), 3.0, UP, np.zeros(3))
    strict = PlacementConstraints(support_cos=1.5)
    assert validate_placement(scene, cam, mesh, tilted, 0.2, strict).failed == "support_normal"


def test_proxy_radius():
    assert proxy_radius(box((0, 0, 0), (1, 2, 4)), 0.5) == pytest.approx(1.0)


# -- depth coupling --------------------------------------------------------

def test_coupled_depth_monte_carlo():
    rng = np.random.default_rng(11)
    src = 3.0
    d = np.array([coupled_depth(rng, src, 0.0, math.inf) for _ in range(10_000)])
    assert d.mean() == pytest.approx(src, rel=0.02)
    assert d.std() == pytest.approx(0.1 * src, rel=0.10)


def test_coupled_depth_truncates():
    rng = np.random.default_rng(2)
    d = [coupled_depth(rng, 3.0, 0.0, 2.9) for _ in range(500)]
    assert all(x is None or 0.0 <= x <= 2.9 for x in d)
    assert coupled_depth(rng, 3.0, 0.0, 1.0) is None   # 20 sigma away


def test_air_pair_depth_correlation():
    scene = Scene.from_meshes([("floor", floor_quad(-50, -50, 50, 50)), ("wall_far", quad([(-50, 30, 0), (-50, 30, 20), (50, 30, 20), (50, 30, 0)]))])
    cam = Camera.look_at((0, -3, 1.6), (0, 2, 1.0), math.radians(55), 64, 36)
    src, tgt = [], []
    for seed in range(150):
        pair = sample_pair(np.random.default_rng(seed), scene, cam, TaskKind.DROP, icosphere(0.5, 1))
        src.append(pair.source.depth)
        tgt.append(pair.target.depth)
    assert np.corrcoef(src, tgt)[0, 1] > 0.9


def test_ground_pairs_are_independent():
    cam = looking_down_camera(64, 36)
    scene = floor_scene()
    xs, ys = [], []
    for seed in range(150):
        pair = sample_pair(np.random.default_rng(seed), scene, cam, TaskKind.ROLL, cube())
        xs.append(pair.source.position[0])
        ys.append(pair.target.position[0])
    assert abs(np.corrcoef(xs, ys)[0, 1]) < 0.25


# -- scale -----------------------------------------------------------------

def _air_at_depth(cam, depth):
    ray = pixel_ray(cam, cam.width / 2, cam.height / 2)
    return Placement(ray.at(depth), "air", (cam.width / 2, cam.height / 2), depth)


def test_choose_scale_hits_fraction():
    cam = Camera((0, 0, 1), (0, 1, 0), (0, 0, 1), math.radians(50), 320, 180)
    c = PlacementConstraints(scale_fraction=(0.07, 0.07))
    for mesh in (cube(), icosphere(0.5, 2), box((0, 0, 0), (0.3, 1.0, 0.5))):
        s = choose_scale(np.random.default_rng(0), cam, mesh, _air_at_depth(cam, 4.0), c)
        verts = s * (mesh.vertices - mesh.aabb.center) + _air_at_depth(cam, 4.0).position
        assert abs(screen_bbox(cam, verts).max_side - 0.07 * 180) <= 1.0


def test_scale_proportional_to_depth():
    cam = Camera((0, 0, 1), (0, 1, 0), (0, 0, 1), math.radians(50), 320, 180)
    c = PlacementConstraints(scale_fraction=(0.12, 0.12))
    s1 = choose_scale(np.random.default_rng(0), cam, icosphere(), _air_at_depth(cam, 3.0), c)
    s2 = choose_scale(np.random.default_rng(0), cam, icosphere(), _air_at_depth(cam, 6.0), c)
    assert s2 / s1 == pytest.approx(2.0, rel=0.02)


def test_choose_scale_deterministic():
    cam = Camera((0, 0, 1), (0, 1, 0), (0, 0, 1), math.radians(50), 320, 180)
    p = _air_at_depth(cam, 4.0)
    assert choose_scale(np.random.default_rng(5), cam, cube(), p) == choose_scale(np.random.default_rng(5), cam, cube(), p)


def test_choose_scale_unattainable():
    # object right at the lens edge can never fit
    cam = Camera((0, 0, 1), (0, 1, 0), (0, 0, 1), math.radians(50), 320, 180)
    p = Placement(pixel_ray(cam, 0.5, 0.5).at(2.0), "air", (0.5, 0.5), 2.0)
    with pytest.raises(NoValidPlacementError):
        choose_scale(np.random.default_rng(0), cam, cube(), p, PlacementConstraints(scale_fraction=(0.2, 0.2), scale_budget=4))


# -- pairs -----------------------------------------------------------------

@pytest.mark.parametrize("kind", list(TaskKind))
def test_pairs_validate_and_share_scale(kind):
    scene = floor_scene()
    cam = looking_down_camera(96, 54)
    mesh = cube()
    for seed in range(10):
        pair = sample_pair(np.random.default_rng(seed), scene, cam, kind, mesh)
        assert pair.source.mode is pair.target.mode
        assert (pair.source.mode is PlacementMode.AIR) == kind.is_air
        assert pair.proxy_radius == pytest.approx(proxy_radius(mesh, pair.scale))
        np.testing.assert_array_equal(pair.delta, pair.target.position - pair.source.position)
        for p in (pair.source, pair.target):
            assert validate_placement(scene, cam, mesh, p, pair.scale)
            if not kind.is_air:
                assert p.position[2] == pytest.approx(pair.proxy_radius, abs=1e-6)
