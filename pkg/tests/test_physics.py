import math

import numpy as np
import pytest

from trajpair.geometry import build_bvh, clearance
from trajpair.physics import (
    BodyState,
    PathShape,
    PathSpec,
    SimConfig,
    SimulationDivergedError,
    TaskKind,
    TaskSpec,
    drag_force,
    initial_velocity,
    path_point,
    simulate,
    step,
)
from trajpair.shapes import floor_quad

G = 9.81
DT = 1.0 / 240
FLOOR = build_bvh(floor_quad(-100, -100, 100, 100))


def body(p, v=(0, 0, 0), r=0.1):
    return BodyState(tuple(p), linear_velocity=tuple(v), proxy_radius=r)


# -- config ----------------------------------------------------------------

def test_simconfig_defaults():
    cfg = SimConfig()
    assert cfg.substeps_per_frame == 15
    assert cfg.dt == DT
    assert cfg.duration == pytest.approx(81 / 16)


def test_simconfig_rejects_fractional_substeps():
    with pytest.raises(ValueError):
        SimConfig(substep_hz=250, fps=16)


def test_taskspec_invariants():
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.DRAG)
    with pytest.raises(ValueError):
        TaskSpec(TaskKind.THROW, throw_speed=-1)


# -- single steps ----------------------------------------------------------

def test_free_space_step_from_rest():
    b, contacts = step(body((0, 0, 5)), None, (0, 0, 0), DT)
    assert b.linear_velocity[2] == pytest.approx(-G * DT, abs=1e-15)
    assert b.position[2] - 5 == pytest.approx(-G * DT * DT, abs=1e-15)
    assert contacts == []


@pytest.mark.parametrize("e", [0.0, 0.4, 0.9])
def test_head_on_impact_restitution(e):
    cfg = SimConfig(restitution=e)
    b = body((0, 0, 0.1 + 0.005), (0, 0, -3.0))
    b, contacts = step(b, FLOOR, (0, 0, 0), DT, cfg)
    assert len(contacts) == 1
    c = contacts[0]
    assert c.normal_speed_out / -c.normal_speed_in == pytest.approx(e, abs=1e-6)
    assert b.linear_velocity[2] == pytest.approx(c.normal_speed_out, abs=1e-12)


def test_slow_impact_comes_to_rest():
    cfg = SimConfig(restitution=0.4)
    b = body((0, 0, 0.1 + 0.0001), (0, 0, -0.02))
    b, contacts = step(b, FLOOR, (0, 0, 0), DT, cfg)
    assert contacts and b.linear_velocity[2] == 0.0


def test_resting_contact_holds_position():
    b = body((0.3, -0.2, 0.1))
    for _ in range(240):
        b, _ = step(b, FLOOR, (0, 0, 0), DT)
        assert b.position[2] == pytest.approx(0.1, abs=1e-9)
        assert b.position[:2] == (0.3, -0.2)


def test_sliding_friction_decelerates():
    b = body((0, 0, 0.1), (1.0, 0, 0))
    speeds = []
    for _ in range(120):
        b, _ = step(b, FLOOR, (0, 0, 0), DT)
        speeds.append(math.hypot(*b.linear_velocity[:2]))
    assert all(b_ <= a + 1e-12 for a, b_ in zip(speeds, speeds[1:]))
    assert speeds[-1] < 1.0


def test_rolling_sets_angular_velocity():
    b = body((0, 0, 0.1), (1.0, 0, 0))
    b, _ = step(b, FLOOR, (0, 0, 0), DT)
    vt = b.linear_velocity
    # omega = n x v_t / r with n = +z
    np.testing.assert_allclose(b.angular_velocity, (0.0, vt[0] / 0.1, 0.0), atol=1e-9)
    assert abs(np.linalg.norm(b.orientation) - 1) < 1e-12


def test_nan_state_diverges():
    with pytest.raises(SimulationDivergedError):
        step(body((0, 0, 1)), None, (math.nan, 0, 0), DT)


# -- task helpers ----------------------------------------------------------

def test_drag_force_examples():
    np.testing.assert_array_equal(drag_force((1, 2, 3), (0, 0, 0), (1, 2, 3), 50, 10), (0, 0, 0))
    np.testing.assert_allclose(drag_force((-1, 0, 0), (0, 0, 0), (0, 0, 0), 50, 10), (50, 0, 0))
    np.testing.assert_allclose(drag_force((0, 0, 0), (0, 2, 5), (0, 0, 0), 50, 10), (0, -20, 0))


def test_path_point_circle():
    p = PathSpec(PathShape.CIRCLE, anchor=(1, 2, 0.3), heading=(0, 1, 0), radius=0.5)
    np.testing.assert_allclose(path_point(p, 0.0), (1, 2, 0.3))
    assert np.linalg.norm(path_point(p, 0.5) - (1, 2, 0.3)) == pytest.approx(1.0)
    np.testing.assert_allclose(path_point(p, 1.0), (1, 2, 0.3), atol=1e-12)


def test_path_point_scurve_end():
    p = PathSpec(PathShape.SCURVE, anchor=(0, 0, 0.2), heading=(1, 0, 0), amplitude=0.3, length=1.6)
    np.testing.assert_allclose(path_point(p, 0.0), (0, 0, 0.2))
    np.testing.assert_allclose(path_point(p, 1.0), (1.6, 0, 0.2), atol=1e-12)


def test_path_point_spiral_radius():
    p = PathSpec(PathShape.SPIRAL, anchor=(0, 0, 0), heading=(1, 0, 0), spiral_a=0.1, spiral_b=0.08, turns=1.5)
    np.testing.assert_allclose(path_point(p, 0.0), (0, 0, 0), atol=1e-15)
    center = np.array([-0.1, 0, 0])
    theta_max = 2 * math.pi * 1.5
    assert np.linalg.norm(path_point(p, 1.0) - center) == pytest.approx(0.1 + 0.08 * theta_max)


def test_paths_are_planar():
    for shape in PathShape:
        p = PathSpec(shape, anchor=(0.5, 0.5, 0.7), heading=(0.6, 0.8, 0))
        zs = [path_point(p, s)[2] for s in np.linspace(0, 1, 25)]
        assert set(zs) == {0.7}


def test_path_point_rejects_bad_progress():
    p = PathSpec(PathShape.CIRCLE)
    with pytest.raises(ValueError):
        path_point(p, 1.01)


def test_initial_velocities():
    h = (0.6, 0.8, 0.0)
    np.testing.assert_allclose(initial_velocity(TaskSpec(TaskKind.THROW, h)), (3.6, 4.8, 0))
    np.testing.assert_allclose(initial_velocity(TaskSpec(TaskKind.ROLL, h)), (1.2, 1.6, 0))
    assert initial_velocity(TaskSpec(TaskKind.DROP, h)) == (0, 0, 0)
    # roll on a tilted support follows the plane
    n = np.array([0.0, -0.3, 1.0]) / math.hypot(0.3, 1.0)
    v = np.array(initial_velocity(TaskSpec(TaskKind.ROLL, (0, 1, 0)), n))
    assert abs(v @ n) < 1e-12 and np.linalg.norm(v) == pytest.approx(2.0)


# -- trajectories ----------------------------------------------------------

def test_drop_matches_closed_form_before_contact():
    z0 = 2.0
    traj = simulate(body((0, 0, z0)), TaskSpec(TaskKind.DROP), FLOOR)
    assert len(traj) == 81
    for k in range(81):
        n = 15 * k
        z = z0 - 0.5 * G * DT * DT * n * (n + 1)
        if z <= 0.1 + 0.05:
            break
        assert traj.positions[k, 2] == pytest.approx(z, abs=1e-9)
    assert k > 5


def test_static_is_constant():
    traj = simulate(body((1, 2, 0.1)), TaskSpec(TaskKind.STATIC), FLOOR)
    assert (traj.positions == (1, 2, 0.1)).all()
    assert (traj.orientations == (1, 0, 0, 0)).all()


def test_throw_ballistic():
    r, h = 0.1, 1.5
    cfg = SimConfig(fps=240, frames=400)   # one recorded pose per substep
    traj = simulate(body((0, 0, h + r)), TaskSpec(TaskKind.THROW, (1, 0, 0)), FLOOR, cfg)
    first = int(np.argmax(traj.contacts))
    t_hit = math.sqrt(2 * h / G)
    assert abs(first * DT - t_hit) <= 2 * DT
    assert traj.positions[first, 0] == pytest.approx(6.0 * t_hit, rel=0.05)


@pytest.mark.parametrize("e", [0.0, 0.4, 0.7, 0.9])
def test_energy_non_increasing_over_contacts(e):
    cfg = SimConfig(restitution=e)
    b = body((0, 0, 1.0), (1.5, 0, 0))
    events = 0
    for _ in range(2400):
        before = b.energy(G)
        b, contacts = step(b, FLOOR, (0, 0, 0), DT, cfg)
        if contacts:
            events += 1
            assert b.energy(G) <= before + 1e-6
    assert events > 3


def test_no_tunneling_at_desk_speeds():
    b = body((0, 0, 1.0), (3.0, 0, -8.0), r=0.05)
    for _ in range(240):
        b, _ = step(b, FLOOR, (0, 0, 0), DT)
        assert clearance(FLOOR, b.position, 0.05) >= -1e-3


def test_free_space_translation_equivariance():
    task = TaskSpec(TaskKind.THROW, (0.6, 0.8, 0))
    delta = np.array([1.75, -0.5, 0.25])
    a = simulate(body((0, 0, 3)), task, None)
    b = simulate(body(delta + (0, 0, 3)), task, None)
    assert np.abs(b.positions - (a.positions + delta)).max() <= 1e-9


def test_simulation_is_bitwise_deterministic():
    path = PathSpec(PathShape.SPIRAL, heading=(1, 0, 0))
    task = TaskSpec(TaskKind.DRAG, drag_path=path)
    a = simulate(body((0, 0, 0.1)), task, FLOOR)
    b = simulate(body((0, 0, 0.1)), task, FLOOR)
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.orientations.tobytes() == b.orientations.tobytes()


@pytest.mark.parametrize("shape", list(PathShape))
def test_drag_tracks_path(shape):
    path = PathSpec(shape, heading=(1, 0, 0))
    traj = simulate(body((0, 0, 0.1)), TaskSpec(TaskKind.DRAG, drag_path=path), FLOOR)
    anchored = PathSpec(shape, anchor=(0, 0, 0.1), heading=(1, 0, 0))
    err = [np.linalg.norm(traj.positions[k] - path_point(anchored, min(1.0, 15 * k * DT / SimConfig().duration)))
           for k in range(81)]
    # spring-damper lag plus floor friction; a loose tracking bound
    assert max(err) < 0.5
    assert np.allclose(traj.positions[:, 2], 0.1, atol=1e-9)


def test_roll_moves_along_heading_and_rotates():
    traj = simulate(body((0, 0, 0.1)), TaskSpec(TaskKind.ROLL, (0, 1, 0)), FLOOR)
    assert traj.positions[-1, 1] > 0.2
    assert abs(traj.positions[-1, 0]) < 1e-12
    assert not np.allclose(traj.orientations[10], (1, 0, 0, 0))
