"""Online scene modification: drop movable clutter that blocks a pair's trajectory corridor."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .geometry import closest_point
from .physics import BodyState, SimConfig, TaskSpec, simulate
from .placement import PlacementPair
from .scene import STRUCTURAL_KEYWORDS, Scene, classify_structural

__all__ = ["Corridor", "STRUCTURAL_KEYWORDS", "classify_structural", "densify", "filter_scene", "nominal_corridor"]

CORRIDOR_RADIUS_FACTOR = 1.25


@dataclass(frozen=True, eq=False)
class Corridor:
    """Swept spheres around one or more trajectories.

    ``centers`` concatenates every segment; ``breaks`` holds the start index of
    each segment after the first, and spacing is only guaranteed inside a segment.
    """

    centers: np.ndarray
    radius: float
    breaks: tuple = ()

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("corridor radius must be positive")

    def segments(self) -> list[np.ndarray]:
        return np.split(self.centers, list(self.breaks))


def densify(points: np.ndarray, spacing: float) -> np.ndarray:
    """Insert evenly spaced points so consecutive samples are at most ``spacing`` apart.

    Repeated consecutive points collapse to one (a resting body adds no centers).
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) < 2:
        return pts.copy()
    out = [pts[:1]]
    for a, b in zip(pts[:-1], pts[1:]):
        d = np.linalg.norm(b - a)
        if d == 0.0:
            continue
        n = max(1, int(np.ceil(d / spacing)))
        t = (np.arange(1, n + 1) / n)[:, None]
        out.append(a + t * (b - a))
    return np.concatenate(out)


def nominal_corridor(task: TaskSpec, pair: PlacementPair, proxy_radius: float, cfg: SimConfig,
                     scene: Scene, protect: Iterable[str] = ()) -> Corridor:
    """Simulate both placements against the structural geometry (plus ``protect``) and sweep a tube around them."""
    protect = set(protect)
    structural = scene.subset(o for o in scene.objects if o.structural or o.name in protect).bvh
    radius = CORRIDOR_RADIUS_FACTOR * proxy_radius
    segs = []
    for p in (pair.source, pair.target):
        body = BodyState(tuple(p.position), proxy_radius=proxy_radius)
        traj = simulate(body, task, structural, cfg, support_normal=p.support_normal)
        segs.append(densify(traj.positions, radius))
    return Corridor(np.concatenate(segs), radius, (len(segs[0]),))


def _blocks(obj, corridor: Corridor) -> bool:
    box = obj.mesh.aabb
    r = corridor.radius
    near = np.all((corridor.centers >= box.min - r) & (corridor.centers <= box.max + r), axis=1)
    for c in corridor.centers[near]:
        if closest_point(obj.bvh, c, r) is not None:
            return True
    return False


def filter_scene(scene: Scene, corridor: Corridor, protect: Iterable[str] = ()) -> Scene:
    """Remove every non-structural object within the corridor radius of any corridor center.

    Objects named in ``protect`` (e.g. the surface a ground placement rests on) are kept.
    """
    protect = set(protect)
    keep = [o for o in scene.objects if o.structural or o.name in protect or not _blocks(o, corridor)]
    if len(keep) == len(scene.objects):
        return scene
    return scene.subset(keep)
