"""Static scene: named objects plus a merged collision BVH."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import Aabb, Bvh, TriMesh, build_bvh, merge_meshes

STRUCTURAL_KEYWORDS = ("wall", "floor", "ceiling", "ground", "stair", "column", "beam")


def classify_structural(name: str, mesh: TriMesh, scene_bounds: Optional[Aabb] = None,
                        keywords: Sequence[str] = STRUCTURAL_KEYWORDS,
                        flat_ratio: float = 0.05, span_ratio: float = 0.5) -> bool:
    """Name keyword match, or large flat geometry relative to the scene bounds."""
    lowered = name.lower()
    if any(k in lowered for k in keywords):
        return True
    ext = mesh.aabb.extent
    big = int(np.argmax(ext))
    if ext[big] <= 0 or ext.min() > flat_ratio * ext[big]:
        return False
    if scene_bounds is None:
        return False
    return bool(ext[big] >= span_ratio * scene_bounds.extent[big])


@dataclass(frozen=True, eq=False)
class SceneObject:
    name: str
    mesh: TriMesh
    object_id: int
    structural: bool
    bvh: Bvh = field(repr=False)


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable object set. ``bvh`` merges every member mesh; face owners are object ids."""

    objects: tuple
    name: str = "scene"

    @classmethod
    def from_meshes(cls, named: Iterable[tuple[str, TriMesh]], name: str = "scene",
                    bounds: Optional[Aabb] = None, keywords: Sequence[str] = STRUCTURAL_KEYWORDS) -> "Scene":
        named = list(named)
        if bounds is None and named:
            bounds = named[0][1].aabb
            for _, m in named[1:]:
                bounds = bounds.union(m.aabb)
        objs = tuple(
            SceneObject(n, m, i, classify_structural(n, m, bounds, keywords), build_bvh(m, np.full(m.n_faces, i)))
            for i, (n, m) in enumerate(named)
        )
        return cls(objs, name)

    def subset(self, keep: Iterable[SceneObject]) -> "Scene":
        return Scene(tuple(keep), self.name)

    @cached_property
    def bvh(self) -> Optional[Bvh]:
        if not self.objects:
            return None
        mesh, owner = merge_meshes([o.mesh for o in self.objects])
        ids = np.array([o.object_id for o in self.objects])
        return build_bvh(mesh, ids[owner])

    @cached_property
    def bounds(self) -> Optional[Aabb]:
        return None if self.bvh is None else Aabb.from_points(self.bvh.mesh.vertices)

    @cached_property
    def structural(self) -> "Scene":
        return self.subset(o for o in self.objects if o.structural)

    def object(self, object_id: int) -> SceneObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(object_id)

    @property
    def names(self) -> list[str]:
        return [o.name for o in self.objects]

    def __len__(self) -> int:
        return len(self.objects)
