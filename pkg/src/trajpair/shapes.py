"""Procedural meshes: primitive foreground objects and the boxes/quads rooms are built from."""

from __future__ import annotations

import math

import numpy as np

from .geometry import TriMesh, build_mesh

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],   # -z
    [4, 5, 6], [4, 6, 7],   # +z
    [0, 1, 5], [0, 5, 4],   # -y
    [2, 3, 7], [2, 7, 6],   # +y
    [1, 2, 6], [1, 6, 5],   # +x
    [3, 0, 4], [3, 4, 7],   # -x
])


def box(lo, hi) -> TriMesh:
    """Axis-aligned box with outward normals."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = [(x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0),
         (x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)]
    return build_mesh(v, _BOX_FACES)


def quad(corners) -> TriMesh:
    """Planar quad from 4 corners in counter-clockwise order (seen from the normal side)."""
    return build_mesh(corners, [[0, 1, 2], [0, 2, 3]])


def floor_quad(x0, y0, x1, y1, z=0.0) -> TriMesh:
    return quad([(x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z)])


def cube(size: float = 1.0) -> TriMesh:
    h = 0.5 * size
    return box((-h, -h, -h), (h, h, h))


def icosphere(radius: float = 0.5, subdivisions: int = 2) -> TriMesh:
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache: dict = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            new += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new
    return build_mesh(radius * np.array(verts), faces)


def cylinder(radius: float = 0.5, height: float = 1.0, segments: int = 24) -> TriMesh:
    ang = 2 * math.pi * np.arange(segments) / segments
    ring = np.stack([radius * np.cos(ang), radius * np.sin(ang)], axis=1)
    h = 0.5 * height
    verts = [(x, y, -h) for x, y in ring] + [(x, y, h) for x, y in ring] + [(0, 0, -h), (0, 0, h)]
    bc, tc = 2 * segments, 2 * segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, segments + j), (i, segments + j, segments + i), (bc, j, i), (tc, segments + i, segments + j)]
    return build_mesh(verts, faces)


def cone(radius: float = 0.5, height: float = 1.0, segments: int = 24) -> TriMesh:
    ang = 2 * math.pi * np.arange(segments) / segments
    h = 0.5 * height
    verts = [(radius * math.cos(a), radius * math.sin(a), -h) for a in ang] + [(0, 0, h), (0, 0, -h)]
    apex, base = segments, segments + 1
    faces = []
    for i in range(segments):
        j = (i + 1) % segments
        faces += [(i, j, apex), (base, j, i)]
    return build_mesh(verts, faces)


PRIMITIVES = {
    "cube": cube,
    "sphere": icosphere,
    "cylinder": cylinder,
    "cone": cone,
}


def primitive(name: str) -> TriMesh:
    try:
        return PRIMITIVES[name]()
    except KeyError:
        raise ValueError(f"unknown primitive {name!r}; choose from {sorted(PRIMITIVES)}") from None
