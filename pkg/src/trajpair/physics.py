"""Sphere-proxy rigid-body simulation against static triangle geometry.

Integration is semi-implicit Euler at a fixed substep rate. Contacts are
resolved by projecting the proxy sphere out of the nearest surface and
applying a restitution/Coulomb-style velocity update (impacts slower than
g·dt/(1−e) come to rest rather than bounce); orientation follows a
kinematic no-slip rolling rule while in contact.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import QUAT_IDENTITY, Bvh, closest_point, normalize, vec3

UP = (0.0, 0.0, 1.0)
_CONTACT_PASSES = 4


class SimulationDivergedError(RuntimeError):
    pass


class TaskKind(str, enum.Enum):
    DROP = "drop"
    THROW = "throw"
    ROLL = "roll"
    DRAG = "drag"
    STATIC = "static"

    @property
    def is_air(self) -> bool:
        return self in (TaskKind.DROP, TaskKind.THROW)


class PathShape(str, enum.Enum):
    CIRCLE = "circle"
    SCURVE = "scurve"
    SPIRAL = "spiral"


@dataclass(frozen=True)
class SimConfig:
    gravity: float = 9.81
    substep_hz: int = 240
    restitution: float = 0.4
    friction_coefficient: float = 0.5
    frames: int = 81
    fps: float = 16.0

    def __post_init__(self):
        ratio = self.substep_hz / self.fps
        if ratio < 1 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("substep_hz must be an integer multiple of fps")
        if not 0.0 <= self.restitution <= 1.0:
            raise ValueError("restitution must lie in [0, 1]")
        if self.friction_coefficient < 0:
            raise ValueError("friction_coefficient must be non-negative")
        if self.frames < 1:
            raise ValueError("frames must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.substep_hz

    @property
    def substeps_per_frame(self) -> int:
        return int(round(self.substep_hz / self.fps))

    @property
    def duration(self) -> float:
        return self.frames / self.fps


@dataclass(frozen=True)
class BodyState:
    position: tuple
    orientation: tuple = QUAT_IDENTITY
    linear_velocity: tuple = (0.0, 0.0, 0.0)
    angular_velocity: tuple = (0.0, 0.0, 0.0)
    mass: float = 1.0
    proxy_radius: float = 0.1

    def __post_init__(self):
        for name in ("position", "linear_velocity", "angular_velocity"):
            object.__setattr__(self, name, tuple(float(c) for c in vec3(getattr(self, name))))
        q = tuple(float(c) for c in self.orientation)
        if len(q) != 4 or abs(math.sqrt(sum(c * c for c in q)) - 1.0) > 1e-9:
            raise ValueError("orientation must be a unit quaternion")
        object.__setattr__(self, "orientation", q)
        if not self.mass > 0 or not self.proxy_radius > 0:
            raise ValueError("mass and proxy_radius must be positive")

    def energy(self, gravity: float = 9.81) -> float:
        """Translational kinetic plus gravitational potential energy."""
        v = self.linear_velocity
        return self.mass * (0.5 * (v[0] ** 2 + v[1] ** 2 + v[2] ** 2) + gravity * self.position[2])


@dataclass(frozen=True)
class Contact:
    point: tuple
    normal: tuple
    depth: float
    normal_speed_in: float
    normal_speed_out: float


@dataclass(frozen=True)
class PathSpec:
    """Planar drag path starting at ``anchor``.

    ``heading`` is the initial travel direction (circle, S-curve) or the
    direction from the spiral center to the start point.
    """

    shape: PathShape
    anchor: tuple = (0.0, 0.0, 0.0)
    heading: tuple = (1.0, 0.0, 0.0)
    radius: float = 0.6          # circle
    amplitude: float = 0.3       # S-curve lateral amplitude
    length: float = 1.6          # S-curve forward length
    spiral_a: float = 0.1        # spiral r(theta) = a + b*theta
    spiral_b: float = 0.08
    turns: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "shape", PathShape(self.shape))
        object.__setattr__(self, "anchor", tuple(float(c) for c in vec3(self.anchor)))
        h = vec3(self.heading)
        if abs(h[2]) > 1e-9 or abs(np.linalg.norm(h) - 1.0) > 1e-9:
            raise ValueError("heading must be a unit horizontal vector")
        object.__setattr__(self, "heading", tuple(float(c) for c in h))


@dataclass(frozen=True)
class TaskSpec:
    kind: TaskKind
    heading: tuple = (1.0, 0.0, 0.0)   # camera forward projected to horizontal
    throw_speed: float = 6.0
    roll_speed: float = 2.0
    drag_path: Optional[PathSpec] = None
    spring_k: float = 50.0   # per unit mass
    spring_c: float = 10.0   # per unit mass

    def __post_init__(self):
        object.__setattr__(self, "kind", TaskKind(self.kind))
        object.__setattr__(self, "heading", tuple(float(c) for c in vec3(self.heading)))
        if self.throw_speed < 0 or self.roll_speed < 0:
            raise ValueError("speeds must be non-negative")
        if self.kind is TaskKind.DRAG and self.drag_path is None:
            raise ValueError("drag task requires a PathSpec")

    def to_dict(self) -> dict:
        d = {"kind": self.kind.value, "heading": list(self.heading), "throw_speed": self.throw_speed,
             "roll_speed": self.roll_speed, "spring_k": self.spring_k, "spring_c": self.spring_c}
        if self.drag_path is not None:
            p = self.drag_path
            d["drag_path"] = {"shape": p.shape.value, "heading": list(p.heading), "radius": p.radius,
                              "amplitude": p.amplitude, "length": p.length, "spiral_a": p.spiral_a,
                              "spiral_b": p.spiral_b, "turns": p.turns}
        return d


@dataclass(frozen=True, eq=False)
class Trajectory:
    positions: np.ndarray      # (frames, 3)
    orientations: np.ndarray   # (frames, 4)
    contacts: np.ndarray       # (frames,) bool: any contact since the previous frame

    def __len__(self) -> int:
        return len(self.positions)

    def pose(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        return self.positions[i], self.orientations[i]


# --------------------------------------------------------------------------
# task forces and paths
# --------------------------------------------------------------------------

def drag_force(p, v, target, k: float, c: float) -> np.ndarray:
    """Damped spring toward ``target`` with the vertical component removed."""
    f = k * (vec3(target) - vec3(p)) - c * vec3(v)
    f[2] = 0.0
    return f


def _drag_force_xy(p, v, target, k, c):
    return (k * (target[0] - p[0]) - c * v[0], k * (target[1] - p[1]) - c * v[1], 0.0)


def path_point(path: PathSpec, s: float) -> np.ndarray:
    """Point at normalized progress ``s`` in [0, 1]; s = 0 is the anchor."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"path progress must lie in [0, 1], got {s}")
    return np.array(_path_point(path, s))


def _path_point(path: PathSpec, s: float):
    hx, hy, _ = path.heading
    lx, ly = -hy, hx  # left of heading
    ax, ay, az = path.anchor
    if path.shape is PathShape.CIRCLE:
        # start on the circumference, center one radius ahead
        th = 2.0 * math.pi * s
        r = path.radius
        a, b = r - r * math.cos(th), r * math.sin(th)
    elif path.shape is PathShape.SCURVE:
        a = s * path.length
        b = path.amplitude * math.sin(2.0 * math.pi * s)
    else:
        th = s * 2.0 * math.pi * path.turns
        rad = path.spiral_a + path.spiral_b * th
        # center sits spiral_a behind the anchor along -heading
        a = rad * math.cos(th) - path.spiral_a
        b = rad * math.sin(th)
    return (ax + a * hx + b * lx, ay + a * hy + b * ly, az)


# --------------------------------------------------------------------------
# integration
# --------------------------------------------------------------------------

def _check_finite(*vals):
    for v in vals:
        for c in v:
            if not math.isfinite(c):
                raise SimulationDivergedError("non-finite body state")


def _step(p, v, q, w, r, m, bvh, force, dt, g, e, mu):
    """One substep on tuples. Returns (p, v, q, w, contacts)."""
    vx = v[0] + (force[0] / m) * dt
    vy = v[1] + (force[1] / m) * dt
    vz = v[2] + (force[2] / m - g) * dt
    px, py, pz = p[0] + vx * dt, p[1] + vy * dt, p[2] + vz * dt
    wx, wy, wz = w
    contacts = []
    bounce_min = g * dt / (1.0 - e) if e < 1.0 else g * dt
    if bvh is not None:
        for _ in range(_CONTACT_PASSES):
            hit = closest_point(bvh, (px, py, pz), r)
            if hit is None or hit[0] >= r:
                break
            dist, cp, face = hit
            if dist > 1e-12:
                nx, ny, nz = (px - cp[0]) / dist, (py - cp[1]) / dist, (pz - cp[2]) / dist
            else:
                nx, ny, nz = (float(c) for c in bvh.mesh.normals[face])
                if nx * vx + ny * vy + nz * vz > 0:
                    nx, ny, nz = -nx, -ny, -nz
            depth = r - dist
            px, py, pz = px + nx * depth, py + ny * depth, pz + nz * depth
            vn = vx * nx + vy * ny + vz * nz
            tx, ty, tz = vx - vn * nx, vy - vn * ny, vz - vn * nz
            vn_out = vn
            if vn < 0.0:
                # below the threshold the gravity kick of this substep would be reflected
                # back as a bounce and add energy, so the contact comes to rest instead
                vn_out = -e * vn if -vn > bounce_min else 0.0
                vt = math.sqrt(tx * tx + ty * ty + tz * tz)
                if vt > 0.0:
                    scale = max(0.0, 1.0 - mu * (1.0 + e) * (-vn) / vt)
                    tx, ty, tz = tx * scale, ty * scale, tz * scale
                vx, vy, vz = tx + vn_out * nx, ty + vn_out * ny, tz + vn_out * nz
            # no-slip rolling: w = (n x v_t) / r
            wx = (ny * tz - nz * ty) / r
            wy = (nz * tx - nx * tz) / r
            wz = (nx * ty - ny * tx) / r
            contacts.append(Contact(cp, (nx, ny, nz), depth, vn, vn_out))

    qw, qx, qy, qz = q
    if wx or wy or wz:
        h = 0.5 * dt
        dw = -wx * qx - wy * qy - wz * qz
        dx = wx * qw + wy * qz - wz * qy
        dy = -wx * qz + wy * qw + wz * qx
        dz = wx * qy - wy * qx + wz * qw
        qw, qx, qy, qz = qw + h * dw, qx + h * dx, qy + h * dy, qz + h * dz
        n = math.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
        qw, qx, qy, qz = qw / n, qx / n, qy / n, qz / n
    out = ((px, py, pz), (vx, vy, vz), (qw, qx, qy, qz), (wx, wy, wz))
    _check_finite(*out)
    return (*out, contacts)


def step(body: BodyState, scene_bvh: Optional[Bvh], task_force, dt: float,
         cfg: SimConfig = SimConfig()) -> tuple[BodyState, list[Contact]]:
    """Advance one substep: v += (g + f/m)·dt, p += v·dt, then resolve contacts."""
    f = tuple(float(c) for c in np.asarray(task_force, dtype=np.float64).reshape(3))
    p, v, q, w, contacts = _step(body.position, body.linear_velocity, body.orientation, body.angular_velocity,
                                 body.proxy_radius, body.mass, scene_bvh, f, dt, cfg.gravity,
                                 cfg.restitution, cfg.friction_coefficient)
    return replace(body, position=p, linear_velocity=v, orientation=q, angular_velocity=w), contacts


def initial_velocity(task: TaskSpec, support_normal=None) -> tuple:
    if task.kind is TaskKind.THROW:
        h = np.array(task.heading)
        h[2] = 0.0
        return tuple(task.throw_speed * normalize(h))
    if task.kind is TaskKind.ROLL:
        n = np.array(UP if support_normal is None else support_normal, dtype=np.float64)
        h = np.array(task.heading)
        h = h - (h @ n) * n
        return tuple(task.roll_speed * normalize(h))
    return (0.0, 0.0, 0.0)


def simulate(initial: BodyState, task: TaskSpec, scene_bvh: Optional[Bvh], cfg: SimConfig = SimConfig(),
             support_normal=None) -> Trajectory:
    """Run a task and record one pose per frame.

    Frame 0 is the initial placement; each later frame follows
    ``substeps_per_frame`` substeps. Drag paths are anchored at the initial
    position, so paired runs share every task parameter.
    """
    n = cfg.frames
    pos = np.empty((n, 3))
    ori = np.empty((n, 4))
    touched = np.zeros(n, dtype=bool)
    pos[0], ori[0] = initial.position, initial.orientation
    if task.kind is TaskKind.STATIC:
        pos[:], ori[:] = initial.position, initial.orientation
        return Trajectory(pos, ori, touched)

    p, q, w = initial.position, initial.orientation, initial.angular_velocity
    v = initial_velocity(task, support_normal)
    r, m, dt = initial.proxy_radius, initial.mass, cfg.dt
    g, e, mu = cfg.gravity, cfg.restitution, cfg.friction_coefficient
    zero = (0.0, 0.0, 0.0)
    path = replace(task.drag_path, anchor=p) if task.kind is TaskKind.DRAG else None
    k, c = task.spring_k * m, task.spring_c * m
    duration = cfg.duration
    spf = cfg.substeps_per_frame
    i = 0
    for frame in range(1, n):
        hit_any = False
        for _ in range(spf):
            if path is not None:
                s = min(1.0, i * dt / duration)
                force = _drag_force_xy(p, v, _path_point(path, s), k, c)
            else:
                force = zero
            p, v, q, w, contacts = _step(p, v, q, w, r, m, scene_bvh, force, dt, g, e, mu)
            hit_any = hit_any or bool(contacts)
            i += 1
        pos[frame], ori[frame], touched[frame] = p, q, hit_any
    return Trajectory(pos, ori, touched)
