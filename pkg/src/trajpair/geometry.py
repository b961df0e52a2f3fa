"""Triangle meshes, axis-aligned boxes and a BVH for ray casting and distance queries.

Conventions: right-handed, +Z up, meters. Quaternions are stored as (w, x, y, z).

Single-ray and single-point queries (:func:`ray_cast`, :func:`clearance`,
:func:`closest_point`) run on plain Python floats; per-call numpy overhead
dominates at the sizes the simulator and placement sampler use. Bulk ray
casting for rendering goes through :func:`ray_cast_batch`, which walks the
same tree with numpy ray packets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

RAY_EPS = 1e-6
LEAF_SIZE = 4
# barycentric slack so rays through shared edges hit at least one triangle
_BARY_EPS = 1e-12
_BOX_PAD = 1e-9


class MalformedMeshError(ValueError):
    pass


class ObjIngestionError(ValueError):
    def __init__(self, message: str, path=None, lineno: Optional[int] = None):
        where = f"{path}:{lineno}: " if lineno is not None else (f"{path}: " if path else "")
        super().__init__(where + message)
        self.path = path
        self.lineno = lineno


# --------------------------------------------------------------------------
# small vector / quaternion helpers
# --------------------------------------------------------------------------

def vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64).reshape(3)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite vector {a}")
    return a


def normalize(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return a / n


QUAT_IDENTITY = (1.0, 0.0, 0.0, 0.0)


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    ax = normalize(axis)
    h = 0.5 * angle
    return np.array([math.cos(h), *(math.sin(h) * ax)])


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=np.float64)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = (float(c) for c in q)
    n = w * w + x * x + y * y + z * z
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"quaternion is not unit length (|q|^2 = {n})")
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def quat_rotate(q, v) -> np.ndarray:
    return quat_to_matrix(q) @ np.asarray(v, dtype=np.float64)


# --------------------------------------------------------------------------
# domain types
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_max: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "origin", vec3(self.origin))
        d = vec3(self.direction)
        if abs(np.linalg.norm(d) - 1.0) > 1e-9:
            raise ValueError("ray direction must be unit length")
        object.__setattr__(self, "direction", d)
        if not self.t_max > 0:
            raise ValueError("t_max must be positive")

    @classmethod
    def towards(cls, origin, direction, t_max: float = math.inf) -> "Ray":
        return cls(origin, normalize(direction), t_max)

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = vec3(self.min), vec3(self.max)
        if np.any(lo > hi):
            raise ValueError("Aabb min must not exceed max")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def from_points(cls, points) -> "Aabb":
        p = np.asarray(points, dtype=np.float64).reshape(-1, 3)
        return cls(p.min(axis=0), p.max(axis=0))

    @property
    def extent(self) -> np.ndarray:
        return self.max - self.min

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.min + self.max)

    def corners(self) -> np.ndarray:
        lo, hi = self.min, self.max
        return np.array([[x, y, z] for x in (lo[0], hi[0]) for y in (lo[1], hi[1]) for z in (lo[2], hi[2])])

    def union(self, other: "Aabb") -> "Aabb":
        return Aabb(np.minimum(self.min, other.min), np.maximum(self.max, other.max))

    def contains(self, p, tol: float = 0.0) -> bool:
        p = np.asarray(p)
        return bool(np.all(p >= self.min - tol) and np.all(p <= self.max + tol))


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Validated triangle mesh. ``normals`` are unit face normals (right-hand winding)."""

    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray
    dropped_faces: int = 0

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        return self.vertices[self.faces]

    @property
    def aabb(self) -> Aabb:
        return Aabb.from_points(self.vertices)


@dataclass(frozen=True)
class HitRecord:
    t: float
    point: np.ndarray
    face_normal: np.ndarray
    face_index: int
    object_id: int = 0


def build_mesh(vertices, faces, area_eps: float = 1e-14) -> TriMesh:
    """Validate vertices/faces, drop zero-area faces and precompute face normals."""
    v = np.asarray(vertices, dtype=np.float64)
    f = np.asarray(faces, dtype=np.int64)
    if v.size == 0 or f.size == 0:
        raise MalformedMeshError("mesh needs at least one vertex and one face")
    if v.ndim != 2 or v.shape[1] != 3:
        raise MalformedMeshError(f"vertices must have shape (n, 3), got {v.shape}")
    if f.ndim != 2 or f.shape[1] != 3:
        raise MalformedMeshError(f"faces must have shape (m, 3), got {f.shape}")
    if not np.all(np.isfinite(v)):
        raise MalformedMeshError("non-finite vertex coordinates")
    bad = (f < 0) | (f >= len(v))
    if bad.any():
        i = int(np.argmax(bad.any(axis=1)))
        raise MalformedMeshError(f"face {i} references a vertex outside 0..{len(v) - 1}: {f[i].tolist()}")

    tri = v[f]
    cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
    area2 = np.linalg.norm(cross, axis=1)
    keep = area2 > area_eps
    n_dropped = int((~keep).sum())
    if not keep.any():
        raise MalformedMeshError("every face is degenerate")
    f = f[keep]
    normals = cross[keep] / area2[keep, None]
    for a in (v, f, normals):
        a.setflags(write=False)
    return TriMesh(v, f, normals, n_dropped)


def load_obj(path) -> TriMesh:
    """Read the geometry subset (``v``/``f``) of a Wavefront OBJ file.

    Polygons are fan-triangulated; negative (relative) indices are supported.
    Every other record type is ignored.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ObjIngestionError(f"cannot read file ({exc.strerror})", path) from exc

    verts: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split("#", 1)[0].split()
        if not parts:
            continue
        tag, args = parts[0], parts[1:]
        if tag == "v":
            if len(args) < 3:
                raise ObjIngestionError("vertex record needs 3 coordinates", path, lineno)
            try:
                verts.append((float(args[0]), float(args[1]), float(args[2])))
            except ValueError:
                raise ObjIngestionError(f"bad vertex coordinates {args[:3]}", path, lineno) from None
        elif tag == "f":
            if len(args) < 3:
                raise ObjIngestionError("face record needs at least 3 vertices", path, lineno)
            idx = []
            for tok in args:
                try:
                    k = int(tok.split("/", 1)[0])
                except ValueError:
                    raise ObjIngestionError(f"bad face index {tok!r}", path, lineno) from None
                if k == 0:
                    raise ObjIngestionError("face index 0 is invalid (OBJ is 1-based)", path, lineno)
                k = k - 1 if k > 0 else len(verts) + k
                if not 0 <= k < len(verts):
                    raise ObjIngestionError(f"face index {tok} out of range", path, lineno)
                idx.append(k)
            for j in range(1, len(idx) - 1):
                faces.append((idx[0], idx[j], idx[j + 1]))
    if not verts or not faces:
        raise ObjIngestionError("no geometry (v/f records) found", path)
    try:
        return build_mesh(verts, faces)
    except MalformedMeshError as exc:
        raise ObjIngestionError(str(exc), path) from exc


def transform_mesh(mesh: TriMesh, uniform_scale: float, rotation=QUAT_IDENTITY, translation=(0.0, 0.0, 0.0)) -> TriMesh:
    """Return ``R·(s·v) + t`` applied to every vertex; topology is unchanged."""
    if not uniform_scale > 0:
        raise ValueError(f"scale must be positive, got {uniform_scale}")
    R = quat_to_matrix(rotation)
    v = (uniform_scale * mesh.vertices) @ R.T + vec3(translation)
    return build_mesh(v, mesh.faces)


# --------------------------------------------------------------------------
# BVH
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Bvh:
    """Binary tree over face indices, stored as flat arrays.

    Node ``k`` is a leaf iff ``left[k] < 0``; its faces are
    ``order[start[k]:start[k] + count[k]]``. ``face_object`` maps each face to the
    id of the scene object that owns it.
    """

    mesh: TriMesh
    node_min: np.ndarray
    node_max: np.ndarray
    left: np.ndarray
    right: np.ndarray
    start: np.ndarray
    count: np.ndarray
    order: np.ndarray
    face_object: np.ndarray
    # per-face edge data shared by both traversal flavours
    v0: np.ndarray = field(repr=False)
    e1: np.ndarray = field(repr=False)
    e2: np.ndarray = field(repr=False)
    _py: tuple = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.left)

    @property
    def aabb(self) -> Aabb:
        return Aabb(self.node_min[0], self.node_max[0])

    def leaves(self) -> list[np.ndarray]:
        return [self.order[s:s + c] for s, c, l in zip(self.start, self.count, self.left) if l < 0]


def build_bvh(mesh: TriMesh, face_object=None) -> Bvh:
    """Median split on the longest centroid axis; leaves hold at most 4 faces."""
    if mesh is None or mesh.n_faces == 0:
        raise MalformedMeshError("cannot build a BVH over an empty mesh")
    tri = mesh.triangles
    tmin, tmax = tri.min(axis=1), tri.max(axis=1)
    cent = tri.mean(axis=1)
    if face_object is None:
        face_object = np.zeros(mesh.n_faces, dtype=np.int64)
    face_object = np.asarray(face_object, dtype=np.int64)
    if face_object.shape != (mesh.n_faces,):
        raise ValueError("face_object must have one entry per face")

    node_min, node_max, left, right, start, count = [], [], [], [], [], []
    order: list[np.ndarray] = []
    n_ordered = 0

    def new_node(idx):
        node_min.append(tmin[idx].min(axis=0))
        node_max.append(tmax[idx].max(axis=0))
        for lst in (left, right, start, count):
            lst.append(-1)
        return len(left) - 1

    root = new_node(np.arange(mesh.n_faces))
    stack = [(root, np.arange(mesh.n_faces))]
    while stack:
        node, idx = stack.pop()
        if len(idx) <= LEAF_SIZE:
            start[node], count[node] = n_ordered, len(idx)
            order.append(idx)
            n_ordered += len(idx)
            continue
        c = cent[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        idx = idx[np.argsort(c[:, axis], kind="stable")]
        mid = len(idx) // 2
        lo_idx, hi_idx = idx[:mid], idx[mid:]
        left[node] = new_node(lo_idx)
        right[node] = new_node(hi_idx)
        # right pushed first so the left subtree is laid out first
        stack.append((right[node], hi_idx))
        stack.append((left[node], lo_idx))

    node_min = np.array(node_min)
    node_max = np.array(node_max)
    pad = _BOX_PAD * (1.0 + np.abs(node_min).max(axis=1, keepdims=True) + np.abs(node_max).max(axis=1, keepdims=True))
    node_min, node_max = node_min - pad, node_max + pad
    order_arr = np.concatenate(order)
    v0 = tri[:, 0].copy()
    e1 = tri[:, 1] - tri[:, 0]
    e2 = tri[:, 2] - tri[:, 0]

    py = (
        [tuple(r) for r in node_min.tolist()],
        [tuple(r) for r in node_max.tolist()],
        list(left), list(right), list(start), list(count),
        order_arr.tolist(),
        [tuple(r) for r in tri[:, 0].tolist()],
        [tuple(r) for r in tri[:, 1].tolist()],
        [tuple(r) for r in tri[:, 2].tolist()],
        [tuple(r) for r in e1.tolist()],
        [tuple(r) for r in e2.tolist()],
    )
    arrays = dict(node_min=node_min, node_max=node_max, left=np.array(left), right=np.array(right),
                  start=np.array(start), count=np.array(count), order=order_arr,
                  face_object=face_object, v0=v0, e1=e1, e2=e2)
    for a in arrays.values():
        a.setflags(write=False)
    return Bvh(mesh=mesh, _py=py, **arrays)


# --------------------------------------------------------------------------
# ray casting
# --------------------------------------------------------------------------

def _ray_triangle(ox, oy, oz, dx, dy, dz, v0, e1, e2):
    """Möller–Trumbore on floats; returns t or None. Two-sided."""
    e2x, e2y, e2z = e2
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    e1x, e1y, e1z = e1
    det = e1x * px + e1y * py + e1z * pz
    if det == 0.0:
        return None
    inv = 1.0 / det
    sx, sy, sz = ox - v0[0], oy - v0[1], oz - v0[2]
    u = (sx * px + sy * py + sz * pz) * inv
    if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
        return None
    qx = sy * e1z - sz * e1y
    qy = sz * e1x - sx * e1z
    qz = sx * e1y - sy * e1x
    v = (dx * qx + dy * qy + dz * qz) * inv
    if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
        return None
    return (e2x * qx + e2y * qy + e2z * qz) * inv


def ray_cast(bvh: Optional[Bvh], ray: Ray) -> Optional[HitRecord]:
    """Nearest hit with t in (1e-6, t_max]; equal-t ties go to the lowest face index."""
    if bvh is None:
        return None
    nmin, nmax, left, right, start, count, order, _, _, _, e1s, e2s = bvh._py
    v0s = bvh._py[7]
    ox, oy, oz = (float(c) for c in ray.origin)
    dx, dy, dz = (float(c) for c in ray.direction)
    ix = 1.0 / dx if dx != 0.0 else math.inf
    iy = 1.0 / dy if dy != 0.0 else math.inf
    iz = 1.0 / dz if dz != 0.0 else math.inf
    best_t, best_f = ray.t_max, -1

    def slab(k):
        lo, hi = nmin[k], nmax[k]
        tn, tf = -math.inf, math.inf
        for o, inv, a, b in ((ox, ix, lo[0], hi[0]), (oy, iy, lo[1], hi[1]), (oz, iz, lo[2], hi[2])):
            if inv == math.inf:
                if o < a or o > b:
                    return None
                continue
            t0, t1 = (a - o) * inv, (b - o) * inv
            if t0 > t1:
                t0, t1 = t1, t0
            if t0 > tn:
                tn = t0
            if t1 < tf:
                tf = t1
        if tn > tf or tf < RAY_EPS:
            return None
        return tn

    root = slab(0)
    if root is None:
        return None
    stack = [(root, 0)]
    while stack:
        tn, k = stack.pop()
        if tn > best_t:
            continue
        if left[k] < 0:
            for f in order[start[k]:start[k] + count[k]]:
                t = _ray_triangle(ox, oy, oz, dx, dy, dz, v0s[f], e1s[f], e2s[f])
                if t is None or t <= RAY_EPS or t > best_t:
                    continue
                if t < best_t or best_f < 0 or f < best_f:
                    best_t, best_f = t, f
            continue
        a, b = slab(left[k]), slab(right[k])
        if a is not None and b is not None:
            # push the farther child first so the nearer one is processed next
            if a <= b:
                stack.append((b, right[k]))
                stack.append((a, left[k]))
            else:
                stack.append((a, left[k]))
                stack.append((b, right[k]))
        elif a is not None:
            stack.append((a, left[k]))
        elif b is not None:
            stack.append((b, right[k]))

    if best_f < 0:
        return None
    return HitRecord(
        t=best_t,
        point=ray.origin + best_t * ray.direction,
        face_normal=bvh.mesh.normals[best_f].copy(),
        face_index=int(best_f),
        object_id=int(bvh.face_object[best_f]),
    )


def _mt_batch(o, d, v0, e1, e2):
    """Vectorised Möller–Trumbore of many rays against one triangle (inf on miss).

    Mirrors :func:`_ray_triangle` operation-for-operation so both paths agree
    to the last bit.
    """
    e2x, e2y, e2z = e2
    dx, dy, dz = d[:, 0], d[:, 1], d[:, 2]
    px = dy * e2z - dz * e2y
    py = dz * e2x - dx * e2z
    pz = dx * e2y - dy * e2x
    e1x, e1y, e1z = e1
    det = e1x * px + e1y * py + e1z * pz
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / det
        sx, sy, sz = o[:, 0] - v0[0], o[:, 1] - v0[1], o[:, 2] - v0[2]
        u = (sx * px + sy * py + sz * pz) * inv
        qx = sy * e1z - sz * e1y
        qy = sz * e1x - sx * e1z
        qz = sx * e1y - sy * e1x
        v = (dx * qx + dy * qy + dz * qz) * inv
        t = (e2x * qx + e2y * qy + e2z * qz) * inv
    ok = (det != 0.0) & (u >= -_BARY_EPS) & (u <= 1.0 + _BARY_EPS) & (v >= -_BARY_EPS) & (u + v <= 1.0 + _BARY_EPS)
    return np.where(ok, t, np.inf)


def ray_cast_batch(bvh: Optional[Bvh], origins, directions, t_max=math.inf) -> tuple[np.ndarray, np.ndarray]:
    """Cast many rays at once. Returns ``(t, face)``; misses have t = inf, face = -1.

    Same hit rule as :func:`ray_cast`. ``origins`` may be a single point shared by all rays.
    """
    d = np.asarray(directions, dtype=np.float64).reshape(-1, 3)
    n = len(d)
    o = np.broadcast_to(np.asarray(origins, dtype=np.float64).reshape(-1, 3), (n, 3))
    limit = np.broadcast_to(np.asarray(t_max, dtype=np.float64), (n,)).copy()
    best_t = limit.copy()
    best_f = np.full(n, -1, dtype=np.int64)
    if bvh is None or n == 0:
        return np.full(n, np.inf), best_f
    with np.errstate(divide="ignore"):
        inv = 1.0 / d

    stack = [(0, np.arange(n))]
    while stack:
        k, idx = stack.pop()
        oi, vi = o[idx], inv[idx]
        with np.errstate(invalid="ignore"):
            t0 = (bvh.node_min[k] - oi) * vi
            t1 = (bvh.node_max[k] - oi) * vi
        tn = np.fmax.reduce(np.fmin(t0, t1), axis=1)
        tf = np.fmin.reduce(np.fmax(t0, t1), axis=1)
        keep = (tn <= tf) & (tf >= RAY_EPS) & (tn <= best_t[idx])
        idx = idx[keep]
        if idx.size == 0:
            continue
        if bvh.left[k] < 0:
            oi, di = o[idx], d[idx]
            s = bvh.start[k]
            for f in bvh.order[s:s + bvh.count[k]]:
                t = _mt_batch(oi, di, bvh.v0[f], bvh.e1[f], bvh.e2[f])
                bt, bf = best_t[idx], best_f[idx]
                better = (t > RAY_EPS) & (t < np.inf) & (t <= bt) & ((t < bt) | (bf < 0) | (f < bf))
                if better.any():
                    sel = idx[better]
                    best_t[sel] = t[better]
                    best_f[sel] = f
            continue
        stack.append((bvh.right[k], idx))
        stack.append((bvh.left[k], idx))

    best_t[best_f < 0] = np.inf
    return best_t, best_f


# --------------------------------------------------------------------------
# distance queries
# --------------------------------------------------------------------------

def _closest_on_triangle(p, a, b, c):
    """Closest point to p on triangle abc (Ericson's region test), floats only."""
    abx, aby, abz = b[0] - a[0], b[1] - a[1], b[2] - a[2]
    acx, acy, acz = c[0] - a[0], c[1] - a[1], c[2] - a[2]
    apx, apy, apz = p[0] - a[0], p[1] - a[1], p[2] - a[2]
    d1 = abx * apx + aby * apy + abz * apz
    d2 = acx * apx + acy * apy + acz * apz
    if d1 <= 0.0 and d2 <= 0.0:
        return a
    bpx, bpy, bpz = p[0] - b[0], p[1] - b[1], p[2] - b[2]
    d3 = abx * bpx + aby * bpy + abz * bpz
    d4 = acx * bpx + acy * bpy + acz * bpz
    if d3 >= 0.0 and d4 <= d3:
        return b
    vc = d1 * d4 - d3 * d2
    if vc <= 0.0 and d1 >= 0.0 and d3 <= 0.0:
        v = d1 / (d1 - d3)
        return (a[0] + v * abx, a[1] + v * aby, a[2] + v * abz)
    cpx, cpy, cpz = p[0] - c[0], p[1] - c[1], p[2] - c[2]
    d5 = abx * cpx + aby * cpy + abz * cpz
    d6 = acx * cpx + acy * cpy + acz * cpz
    if d6 >= 0.0 and d5 <= d6:
        return c
    vb = d5 * d2 - d1 * d6
    if vb <= 0.0 and d2 >= 0.0 and d6 <= 0.0:
        w = d2 / (d2 - d6)
        return (a[0] + w * acx, a[1] + w * acy, a[2] + w * acz)
    va = d3 * d6 - d5 * d4
    if va <= 0.0 and (d4 - d3) >= 0.0 and (d5 - d6) >= 0.0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return (b[0] + w * (c[0] - b[0]), b[1] + w * (c[1] - b[1]), b[2] + w * (c[2] - b[2]))
    denom = 1.0 / (va + vb + vc)
    v = vb * denom
    w = vc * denom
    return (a[0] + abx * v + acx * w, a[1] + aby * v + acy * w, a[2] + abz * v + acz * w)


def _box_dist2(p, lo, hi):
    s = 0.0
    for x, a, b in zip(p, lo, hi):
        if x < a:
            s += (a - x) * (a - x)
        elif x > b:
            s += (x - b) * (x - b)
    return s


def closest_point(bvh: Optional[Bvh], p, max_dist: float = math.inf):
    """Nearest mesh point to ``p`` within ``max_dist``.

    Returns ``(distance, point, face_index)`` or None if nothing lies within range.
    """
    if bvh is None:
        return None
    nmin, nmax, left, right, start, count, order, A, B, C, _, _ = bvh._py
    p = (float(p[0]), float(p[1]), float(p[2]))
    best2 = max_dist * max_dist if math.isfinite(max_dist) else math.inf
    best = None
    stack = [0]
    while stack:
        k = stack.pop()
        if _box_dist2(p, nmin[k], nmax[k]) > best2:
            continue
        if left[k] < 0:
            for f in order[start[k]:start[k] + count[k]]:
                q = _closest_on_triangle(p, A[f], B[f], C[f])
                dx, dy, dz = p[0] - q[0], p[1] - q[1], p[2] - q[2]
                d2 = dx * dx + dy * dy + dz * dz
                if d2 < best2 or (d2 == best2 and best is not None and f < best[2]):
                    best2, best = d2, (d2, q, f)
            continue
        l, r = left[k], right[k]
        dl, dr = _box_dist2(p, nmin[l], nmax[l]), _box_dist2(p, nmin[r], nmax[r])
        if dl <= dr:
            stack.append(r)
            stack.append(l)
        else:
            stack.append(l)
            stack.append(r)
    if best is None:
        return None
    return math.sqrt(best[0]), best[1], best[2]


def clearance(bvh: Optional[Bvh], center, radius: float) -> float:
    """Distance from ``center`` to the mesh minus ``radius``; negative means penetration."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    hit = closest_point(bvh, center)
    if hit is None:
        return math.inf
    return hit[0] - radius


def merge_meshes(meshes: Sequence[TriMesh]) -> tuple[TriMesh, np.ndarray]:
    """Concatenate meshes; returns the merged mesh and the source index of every face."""
    verts, faces, owner = [], [], []
    offset = 0
    for i, m in enumerate(meshes):
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        owner.append(np.full(m.n_faces, i, dtype=np.int64))
        offset += len(m.vertices)
    return build_mesh(np.concatenate(verts), np.concatenate(faces)), np.concatenate(owner)
