"""First-frame placement sampling for paired source/target videos."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .camera import Camera, pixel_ray, point_visible, screen_bbox, screen_extent
from .geometry import TriMesh, clearance, ray_cast
from .physics import TaskKind
from .scene import Scene

UP = np.array([0.0, 0.0, 1.0])


class NoValidPlacementError(RuntimeError):
    pass


class PlacementMode(str, enum.Enum):
    AIR = "air"
    GROUND = "ground"


@dataclass(frozen=True)
class PlacementConstraints:
    clearance_margin: float = 0.02
    retry_budget: int = 256
    support_cos: float = 0.95
    air_band: tuple = (0.2, 0.8)
    air_miss_range: tuple = (0.5, 4.0)
    depth_sigma_frac: float = 0.1
    scale_fraction: tuple = (0.07, 0.20)
    scale_budget: int = 16
    # ground placements touch their support, so only penetration is rejected
    ground_tolerance: float = 1e-6


DEFAULT_CONSTRAINTS = PlacementConstraints()


@dataclass(frozen=True)
class Placement:
    position: np.ndarray
    mode: PlacementMode
    pixel: tuple
    depth: float
    support_normal: Optional[np.ndarray] = None
    support_point: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", PlacementMode(self.mode))
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float).reshape(3))
        if self.support_normal is not None:
            object.__setattr__(self, "support_normal", np.asarray(self.support_normal, dtype=float).reshape(3))
        if self.support_point is not None:
            object.__setattr__(self, "support_point", np.asarray(self.support_point, dtype=float).reshape(3))
        if self.mode is PlacementMode.GROUND:
            if self.support_normal is None or float(np.dot(self.support_normal, UP)) < 0.95:
                raise ValueError("ground placement needs an upward support normal")
        elif self.support_normal is not None:
            raise ValueError("air placements carry no support normal")
        if not self.depth > 0:
            raise ValueError("depth must be positive")

    def to_dict(self) -> dict:
        d = {"position": self.position.tolist(), "mode": self.mode.value,
             "pixel": list(self.pixel), "depth": self.depth}
        if self.support_normal is not None:
            d["support_normal"] = self.support_normal.tolist()
            d["support_point"] = self.support_point.tolist()
        return d


@dataclass(frozen=True)
class PlacementPair:
    source: Placement
    target: Placement
    scale: float
    proxy_radius: float

    def __post_init__(self):
        if self.source.mode is not self.target.mode:
            raise ValueError("paired placements must share a mode")

    @property
    def delta(self) -> np.ndarray:
        return self.target.position - self.source.position

    def to_dict(self) -> dict:
        return {"source": self.source.to_dict(), "target": self.target.to_dict(), "scale": self.scale,
                "proxy_radius": self.proxy_radius, "delta": self.delta.tolist()}


@dataclass(frozen=True)
class ValidationResult:
    ok: bool
    failed: Optional[str] = None

    def __bool__(self) -> bool:
        return self.ok


def proxy_radius(mesh: TriMesh, scale: float) -> float:
    """Half the largest bounding-box extent of the scaled mesh."""
    return 0.5 * scale * float(mesh.aabb.extent.max())


def _canonical(mesh: TriMesh) -> np.ndarray:
    """Vertices relative to the mesh's box center."""
    return mesh.vertices - mesh.aabb.center


def _random_pixel(rng: np.random.Generator, cam: Camera) -> tuple[float, float]:
    return (int(rng.integers(cam.width)) + 0.5, int(rng.integers(cam.height)) + 0.5)


def _clearance_ok(scene: Scene, placement: Placement, radius: float, c: PlacementConstraints) -> bool:
    clr = clearance(scene.bvh, placement.position, radius)
    if placement.mode is PlacementMode.GROUND:
        return clr >= -c.ground_tolerance
    return clr >= c.clearance_margin


def validate_placement(scene: Scene, cam: Camera, object_mesh: TriMesh, placement: Placement, scale: float,
                       constraints: PlacementConstraints = DEFAULT_CONSTRAINTS) -> ValidationResult:
    """Visibility, then clearance, then support normal; reports the first failed check."""
    if not point_visible(cam, scene.bvh, placement.position):
        return ValidationResult(False, "visibility")
    if not _clearance_ok(scene, placement, proxy_radius(object_mesh, scale), constraints):
        return ValidationResult(False, "clearance")
    if placement.mode is PlacementMode.GROUND:
        if placement.support_normal is None or float(placement.support_normal @ UP) < constraints.support_cos:
            return ValidationResult(False, "support_normal")
    return ValidationResult(True)


def _air_candidate(rng, scene, cam, c: PlacementConstraints):
    px, py = _random_pixel(rng, cam)
    ray = pixel_ray(cam, px, py)
    hit = ray_cast(scene.bvh, ray)
    if hit is not None:
        lo, hi = c.air_band[0] * hit.t, c.air_band[1] * hit.t
    else:
        lo, hi = c.air_miss_range
    depth = float(rng.uniform(lo, hi))
    return Placement(ray.at(depth), PlacementMode.AIR, (px, py), depth)


def _ground_candidate(rng, scene, cam, radius, c: PlacementConstraints):
    px, py = _random_pixel(rng, cam)
    ray = pixel_ray(cam, px, py)
    hit = ray_cast(scene.bvh, ray)
    if hit is None:
        return None
    n = hit.face_normal if hit.face_normal @ ray.direction < 0 else -hit.face_normal
    if float(n @ UP) < c.support_cos:
        return None
    return Placement(hit.point + radius * n, PlacementMode.GROUND, (px, py), hit.t, n, hit.point)


def _accept(scene, cam, placement, radius, c) -> bool:
    return point_visible(cam, scene.bvh, placement.position) and _clearance_ok(scene, placement, radius, c)


def sample_air_placement(rng: np.random.Generator, scene: Scene, cam: Camera, proxy_radius: float,
                         constraints: PlacementConstraints = DEFAULT_CONSTRAINTS) -> Placement:
    """Random pixel, random depth along the visible part of its ray; resampled until clear."""
    for _ in range(constraints.retry_budget):
        cand = _air_candidate(rng, scene, cam, constraints)
        if _accept(scene, cam, cand, proxy_radius, constraints):
            return cand
    raise NoValidPlacementError(f"no valid air placement after {constraints.retry_budget} attempts")


def sample_ground_placement(rng: np.random.Generator, scene: Scene, cam: Camera, proxy_radius: float,
                            constraints: PlacementConstraints = DEFAULT_CONSTRAINTS) -> Placement:
    """Random pixel whose first hit faces up; the proxy sphere rests on the hit point."""
    for _ in range(constraints.retry_budget):
        cand = _ground_candidate(rng, scene, cam, proxy_radius, constraints)
        if cand is not None and _accept(scene, cam, cand, proxy_radius, constraints):
            return cand
    raise NoValidPlacementError(f"no valid ground placement after {constraints.retry_budget} attempts")


def coupled_depth(rng: np.random.Generator, source_depth: float, lo: float, hi: float,
                  sigma_frac: float = 0.1, max_draws: int = 64) -> Optional[float]:
    """Draw Normal(source_depth, sigma_frac·source_depth) truncated to [lo, hi] by rejection."""
    sigma = sigma_frac * source_depth
    for _ in range(max_draws):
        d = float(rng.normal(source_depth, sigma))
        if lo <= d <= hi:
            return d
    return None


def _scaled_center(placement: Placement, half_extent: float, s: float) -> np.ndarray:
    if placement.mode is PlacementMode.GROUND:
        return placement.support_point + (s * half_extent) * placement.support_normal
    return placement.position


def _solve_scale(cam: Camera, verts: np.ndarray, placement: Placement, half_extent: float,
                 target_side: float) -> Optional[float]:
    """Scale whose continuous projected max side equals ``target_side``.

    Proportional updates; projection is nearly linear in scale so this settles
    in one or two rounds (ground placements shift the center with scale).
    """
    s = 1.0
    for _ in range(30):
        ext = screen_extent(cam, s * verts + _scaled_center(placement, half_extent, s))
        if ext is None:
            return None
        side = max(ext[2] - ext[0], ext[3] - ext[1])
        if side <= 0:
            return None
        if abs(side - target_side) < 1e-4:
            return s
        s *= target_side / side
        if not math.isfinite(s) or s <= 0:
            return None
    return None


def choose_scale(rng: np.random.Generator, cam: Camera, object_mesh: TriMesh, placement: Placement,
                 constraints: PlacementConstraints = DEFAULT_CONSTRAINTS) -> float:
    """Scale so the object's first-frame screen box has max side f·height, f ~ U[0.07, 0.20].

    The inclusive pixel box of a continuous extent L has between L and L+2
    pixels, so solving for L = f·H − 1 keeps the measured side within ±1 px.
    Draws that would leave the frame are redrawn.
    """
    verts = _canonical(object_mesh)
    half = 0.5 * float(object_mesh.aabb.extent.max())
    lo, hi = constraints.scale_fraction
    for _ in range(constraints.scale_budget):
        f = float(rng.uniform(lo, hi))
        target = f * cam.height
        s = _solve_scale(cam, verts, placement, half, target - 1.0)
        if s is None:
            continue
        pts = s * verts + _scaled_center(placement, half, s)
        ext = screen_extent(cam, pts)
        if ext[0] < 0 or ext[1] < 0 or ext[2] >= cam.width or ext[3] >= cam.height:
            continue
        box = screen_bbox(cam, pts)
        if box is not None and abs(box.max_side - target) <= 1.0:
            return s
    raise NoValidPlacementError("no attainable object scale for this placement")


def _rest_on_support(p: Placement, radius: float) -> Placement:
    if p.mode is PlacementMode.GROUND:
        return replace(p, position=p.support_point + radius * p.support_normal)
    return p


def mode_for_task(kind: TaskKind) -> PlacementMode:
    return PlacementMode.AIR if TaskKind(kind).is_air else PlacementMode.GROUND


def sample_pair(rng: np.random.Generator, scene: Scene, cam: Camera, task, object_mesh: TriMesh,
                constraints: PlacementConstraints = DEFAULT_CONSTRAINTS) -> PlacementPair:
    """Sample source and target placements sharing one object scale.

    The source is drawn with a small provisional radius, the scale is chosen
    at the source, and the source is then re-validated at full size. Ground
    targets are independent draws; air targets take an independent pixel with
    depth coupled to the source depth.
    """
    kind = getattr(task, "kind", task)
    mode = mode_for_task(kind)
    half = 0.5 * float(object_mesh.aabb.extent.max())
    provisional = 1e-3
    c = constraints

    for _ in range(c.retry_budget):
        if mode is PlacementMode.AIR:
            source = sample_air_placement(rng, scene, cam, provisional, c)
        else:
            source = sample_ground_placement(rng, scene, cam, provisional, c)
        try:
            scale = choose_scale(rng, cam, object_mesh, source, c)
        except NoValidPlacementError:
            continue
        radius = scale * half
        source = _rest_on_support(source, radius)
        if not validate_placement(scene, cam, object_mesh, source, scale, c):
            continue

        if mode is PlacementMode.GROUND:
            target = sample_ground_placement(rng, scene, cam, radius, c)
        else:
            target = _sample_coupled_air(rng, scene, cam, source, radius, c)
            if target is None:
                continue
        if not validate_placement(scene, cam, object_mesh, target, scale, c):
            continue
        return PlacementPair(source, target, scale, radius)
    raise NoValidPlacementError(f"no valid placement pair after {c.retry_budget} attempts")


def _sample_coupled_air(rng, scene, cam, source: Placement, radius: float, c: PlacementConstraints):
    for _ in range(c.retry_budget):
        px, py = _random_pixel(rng, cam)
        ray = pixel_ray(cam, px, py)
        hit = ray_cast(scene.bvh, ray)
        hi = hit.t if hit is not None else math.inf
        depth = coupled_depth(rng, source.depth, 0.0, hi, c.depth_sigma_frac)
        if depth is None or depth <= 0.0:
            continue
        cand = Placement(ray.at(depth), PlacementMode.AIR, (px, py), depth)
        if _accept(scene, cam, cand, radius, c):
            return cand
    return None
