import numpy as np
import pytest

from trajpair.geometry import Aabb, clearance
from trajpair.physics import BodyState, SimConfig, TaskKind, TaskSpec, simulate
from trajpair.placement import Placement, PlacementPair
from trajpair.scene import Scene
from trajpair.scenemod import CORRIDOR_RADIUS_FACTOR, Corridor, classify_structural, densify, filter_scene, nominal_corridor
from trajpair.shapes import box, floor_quad, quad

ROOM = Aabb(np.array([0.0, 0.0, 0.0]), np.array([6.0, 6.0, 3.0]))
UP = np.array([0.0, 0.0, 1.0])


def test_keyword_structural():
    assert classify_structural("Wall_North_01", box((0, 0, 0), (0.1, 0.1, 0.1)), ROOM)
    assert classify_structural("FLOOR", box((0, 0, 0), (1, 1, 1)))


def test_clutter_not_structural():
    assert not classify_structural("chair_3", box((0, 0, 0), (0.5, 0.5, 0.5)), ROOM)


def test_large_flat_slab_structural():
    assert classify_structural("mesh_17", box((0, 0, 0), (6, 6, 0.1)), ROOM)
    # flat but small relative to the room
    assert not classify_structural("mesh_18", box((0, 0, 0), (1, 1, 0.02)), ROOM)


def test_densify_spacing():
    pts = np.array([[0, 0, 0], [1, 0, 0], [1, 0.05, 0], [1, 2, 2]], dtype=float)
    out = densify(pts, 0.1)
    assert (np.linalg.norm(np.diff(out, axis=0), axis=1) <= 0.1 + 1e-12).all()
    for p in pts:
        assert np.min(np.linalg.norm(out - p, axis=1)) < 1e-12


def _floor_room(extra=()):
    named = [("floor", floor_quad(-5, -5, 5, 5)), ("wall_e", quad([(3, -5, 0), (3, 5, 0), (3, 5, 3), (3, -5, 3)]))]
    return Scene.from_meshes(named + list(extra))


def _ground(x, y, r):
    return Placement((x, y, r), "ground", (0, 0), 3.0, UP, np.array([x, y, 0.0]))


def _air(x, y, z):
    return Placement((x, y, z), "air", (0, 0), 3.0)


def test_static_corridor_is_two_spheres():
    r = 0.1
    pair = PlacementPair(_ground(0, 0, r), _ground(1, 1, r), 0.2, r)
    c = nominal_corridor(TaskSpec(TaskKind.STATIC), pair, r, SimConfig(), _floor_room())
    assert len(c.centers) == 2
    np.testing.assert_array_equal(c.centers, [(0, 0, r), (1, 1, r)])
    assert c.radius == pytest.approx(CORRIDOR_RADIUS_FACTOR * r)


def test_drop_corridor_spans_vertical_segments():
    r = 0.1
    pair = PlacementPair(_air(0, 0, 2.0), _air(1, 0, 1.5), 0.2, r)
    c = nominal_corridor(TaskSpec(TaskKind.DROP), pair, r, SimConfig(), _floor_room())
    segs = c.segments()
    assert len(segs) == 2
    for seg, (x, z0) in zip(segs, [(0, 2.0), (1, 1.5)]):
        assert np.allclose(seg[:, :2], (x, 0))
        assert seg[0, 2] == pytest.approx(z0)
        assert seg[:, 2].min() == pytest.approx(r, abs=1e-6)
        assert (np.linalg.norm(np.diff(seg, axis=0), axis=1) <= c.radius + 1e-12).all()


def test_corridor_ignores_clutter():
    r = 0.1
    chair = ("chair", box((-0.3, -0.3, 0), (0.3, 0.3, 0.8)))
    pair = PlacementPair(_air(0, 0, 2.0), _air(1, 0, 2.0), 0.2, r)
    c = nominal_corridor(TaskSpec(TaskKind.DROP), pair, r, SimConfig(), _floor_room([chair]))
    # simulated against structure only: falls through where the chair is
    assert c.segments()[0][:, 2].min() == pytest.approx(r, abs=1e-6)


def test_filter_removes_only_blocking_clutter():
    r = 0.1
    chair = ("chair", box((-0.3, -0.3, 0), (0.3, 0.3, 0.8)))
    lamp = ("lamp", box((-4, -4, 0), (-3.8, -3.8, 1.5)))
    scene = _floor_room([chair, lamp])
    # corridor also grazes the wall
    pair = PlacementPair(_air(0, 0, 2.0), _air(2.95, 0, 2.0), 0.2, r)
    c = nominal_corridor(TaskSpec(TaskKind.DROP), pair, r, SimConfig(), scene)
    out = filter_scene(scene, c)
    assert out.names == ["floor", "wall_e", "lamp"]
    assert filter_scene(out, c).names == out.names      # idempotent


def test_filter_keeps_protected():
    chair = ("chair", box((-0.3, -0.3, 0), (0.3, 0.3, 0.8)))
    scene = _floor_room([chair])
    c = Corridor(np.array([[0.0, 0.0, 0.9]]), 0.2)
    assert filter_scene(scene, c).names == ["floor", "wall_e"]
    assert filter_scene(scene, c, protect=["chair"]).names == scene.names


def test_protected_support_shapes_corridor():
    r = 0.1
    table = ("table", box((-1, -1, 0), (1, 1, 0.75)))
    top = lambda x: Placement((x, 0, 0.75 + r), "ground", (0, 0), 3.0, UP, np.array([x, 0, 0.75]))
    pair = PlacementPair(top(0.0), top(0.5), 0.2, r)
    scene = _floor_room([table])
    c = nominal_corridor(TaskSpec(TaskKind.STATIC), pair, r, SimConfig(), scene, protect=["table"])
    assert c.centers[:, 2].min() == pytest.approx(0.75 + r)


def test_filter_unchanged_when_far():
    scene = _floor_room([("box", box((-4, -4, 0), (-3.5, -3.5, 0.5)))])
    c = Corridor(np.array([[1.0, 1.0, 1.0], [1.0, 1.2, 1.0]]), 0.1)
    assert filter_scene(scene, c) is scene


def test_all_structural_scene_untouched():
    scene = _floor_room()
    c = Corridor(np.array([[0.0, 0.0, 0.05], [2.99, 0, 1]]), 0.5)
    assert filter_scene(scene, c).names == scene.names


def test_filter_rule_matches_clearance():
    rng = np.random.default_rng(4)
    clutter = [(f"crate_{i}", box(tuple(c), tuple(c + 0.4))) for i, c in enumerate(rng.uniform(-3, 2.5, size=(12, 3)) * (1, 1, 0))]
    scene = _floor_room(clutter)
    centers = rng.uniform(-3, 3, size=(30, 3)) * (1, 1, 0.3)
    c = Corridor(centers, 0.3)
    kept = set(filter_scene(scene, c).names)
    for o in scene.objects:
        blocked = any(clearance(o.bvh, p, c.radius) < 0 for p in centers)
        assert (o.name in kept) == (o.structural or not blocked)


def test_filtered_pair_preserves_offset():
    r = 0.1
    chair = ("chair", box((-0.3, -0.3, 0), (0.3, 0.3, 0.8)))
    scene = _floor_room([chair])
    pair = PlacementPair(_air(0, 0, 2.0), _air(1.5, -1.0, 2.0), 0.2, r)
    task = TaskSpec(TaskKind.DROP)
    cfg = SimConfig()
    out = filter_scene(scene, nominal_corridor(task, pair, r, cfg, scene))
    xa = simulate(BodyState(tuple(pair.source.position), proxy_radius=r), task, out.bvh, cfg).positions
    xb = simulate(BodyState(tuple(pair.target.position), proxy_radius=r), task, out.bvh, cfg).positions
    assert np.abs(xb - (xa + pair.delta)).max() <= 1e-6


def test_corridor_radius_must_be_positive():
    with pytest.raises(ValueError):
        Corridor(np.zeros((1, 3)), 0.0)
