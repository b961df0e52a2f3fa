"""Flat Lambertian ray-cast renderer with occlusion-aware binary object masks.

Frames are ``(H, W, 3)`` uint8 arrays and masks ``(H, W)`` uint8 arrays with
0 on the foreground object and 255 elsewhere.

The scene is static for a fixed camera, so its primary hits are cast once
(:class:`SceneView`) and each frame only re-casts the pixels covered by the
posed object, in the object's local frame.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import Camera, pixel_directions, project_points
from .geometry import QUAT_IDENTITY, Bvh, TriMesh, build_bvh, build_mesh, normalize, quat_to_matrix, ray_cast_batch
from .scene import Scene

FOREGROUND = 0
BACKGROUND = 255
FOREGROUND_ID = -1


def object_albedo(object_id: int) -> np.ndarray:
    """Stable per-object color in [0.25, 0.9]^3."""
    h = hashlib.sha256(str(int(object_id)).encode()).digest()
    return 0.25 + 0.65 * np.frombuffer(h[:3], dtype=np.uint8) / 255.0


@dataclass(frozen=True)
class RenderSettings:
    background: tuple = (40, 44, 52)
    light_direction: tuple = (0.3, 0.2, 0.93)   # toward the light
    intensity: float = 0.75
    ambient: float = 0.25
    foreground_albedo: tuple = (0.92, 0.38, 0.16)

    def __post_init__(self):
        if self.intensity < 0 or self.ambient < 0:
            raise ValueError("intensity and ambient must be non-negative")
        object.__setattr__(self, "light_direction", tuple(normalize(self.light_direction)))

    def albedo(self, object_id: int) -> np.ndarray:
        if object_id == FOREGROUND_ID:
            return np.asarray(self.foreground_albedo, dtype=np.float64)
        return object_albedo(object_id)


def shade(albedo: np.ndarray, normals: np.ndarray, view_dirs: np.ndarray, settings: RenderSettings) -> np.ndarray:
    """albedo·(ambient + intensity·max(0, n·l)) quantised to uint8; normals face the viewer."""
    n = np.where(((normals * view_dirs).sum(axis=1) > 0)[:, None], -normals, normals)
    lam = np.maximum(0.0, n @ np.asarray(settings.light_direction))
    c = albedo * (settings.ambient + settings.intensity * lam)[:, None]
    return np.clip(np.rint(255.0 * c), 0, 255).astype(np.uint8)


@dataclass(frozen=True, eq=False)
class ObjectModel:
    """Foreground mesh centered on its bounding box, with a BVH in local units."""

    mesh: TriMesh
    scale: float = 1.0
    bvh: Bvh = field(init=False, repr=False)
    local_vertices: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        local = self.mesh.vertices - self.mesh.aabb.center
        object.__setattr__(self, "local_vertices", local)
        object.__setattr__(self, "bvh", build_bvh(build_mesh(local, self.mesh.faces)))

    def world_vertices(self, position, orientation=QUAT_IDENTITY) -> np.ndarray:
        R = quat_to_matrix(orientation)
        return (self.scale * self.local_vertices) @ R.T + np.asarray(position, dtype=np.float64)


def as_object_model(obj, scale: Optional[float] = None) -> ObjectModel:
    if isinstance(obj, ObjectModel):
        if scale is not None and scale != obj.scale:
            return ObjectModel(obj.mesh, scale)
        return obj
    return ObjectModel(obj, 1.0 if scale is None else scale)


@dataclass(frozen=True, eq=False)
class SceneView:
    """Per-pixel primary hits of a static scene for one camera."""

    cam: Camera
    directions: np.ndarray   # (H*W, 3)
    t: np.ndarray            # (H*W,), inf on miss
    rgb: np.ndarray          # (H*W, 3) uint8 shaded scene

    @classmethod
    def build(cls, scene: Optional[Scene], cam: Camera, settings: RenderSettings) -> "SceneView":
        dirs = pixel_directions(cam)
        bvh = scene.bvh if scene is not None else None
        t, face = ray_cast_batch(bvh, cam.position, dirs)
        rgb = np.empty((len(dirs), 3), dtype=np.uint8)
        rgb[:] = np.asarray(settings.background, dtype=np.uint8)
        hit = face >= 0
        if hit.any():
            ids, inv = np.unique(bvh.face_object[face[hit]], return_inverse=True)
            alb = np.stack([settings.albedo(int(i)) for i in ids])[inv]
            rgb[hit] = shade(alb, bvh.mesh.normals[face[hit]], dirs[hit], settings)
        return cls(cam, dirs, t, rgb)


def _object_pixels(obj: ObjectModel, cam: Camera, position, orientation) -> np.ndarray:
    """Flat indices of pixels whose centers can see the object (its projected box, inflated by 1 px)."""
    xy, front = project_points(cam, obj.world_vertices(position, orientation))
    if not front.any():
        return np.empty(0, dtype=np.int64)
    if front.all():
        fl = np.floor(xy)
        x0, y0 = (fl.min(axis=0) - 1).astype(int)
        x1, y1 = (fl.max(axis=0) + 1).astype(int)
        x0, y0 = max(x0, 0), max(y0, 0)
        x1, y1 = min(x1, cam.width - 1), min(y1, cam.height - 1)
        if x0 > x1 or y0 > y1:
            return np.empty(0, dtype=np.int64)
    else:
        # straddles the camera plane: projection is unbounded
        x0, y0, x1, y1 = 0, 0, cam.width - 1, cam.height - 1
    ys, xs = np.mgrid[y0:y1 + 1, x0:x1 + 1]
    return (ys * cam.width + xs).ravel()


def _cast_object(obj: ObjectModel, cam: Camera, dirs: np.ndarray, position, orientation):
    R = quat_to_matrix(orientation)
    # local-frame rays with unnormalised directions keep world-space t
    o_local = (R.T @ (cam.position - np.asarray(position, dtype=np.float64))) / obj.scale
    d_local = (dirs @ R) / obj.scale
    t, face = ray_cast_batch(obj.bvh, o_local, d_local)
    normals = np.zeros((len(dirs), 3))
    hit = face >= 0
    normals[hit] = obj.bvh.mesh.normals[face[hit]] @ R.T
    return t, normals


def _compose(view: SceneView, obj: ObjectModel, position, orientation, settings: RenderSettings,
             want_rgb: bool = True):
    cam = view.cam
    mask = np.full(cam.width * cam.height, BACKGROUND, dtype=np.uint8)
    rgb = view.rgb.copy() if want_rgb else None
    pix = _object_pixels(obj, cam, position, orientation)
    if pix.size:
        dirs = view.directions[pix]
        t, normals = _cast_object(obj, cam, dirs, position, orientation)
        front = t < view.t[pix]
        sel = pix[front]
        mask[sel] = FOREGROUND
        if want_rgb and sel.size:
            rgb[sel] = shade(settings.albedo(FOREGROUND_ID)[None, :], normals[front], dirs[front], settings)
    shape = (cam.height, cam.width)
    return (rgb.reshape(*shape, 3) if want_rgb else None), mask.reshape(shape)


def render_frame(scene: Optional[Scene], object_mesh, object_pose, cam: Camera,
                 settings: RenderSettings = RenderSettings(), scale: Optional[float] = None,
                 view: Optional[SceneView] = None) -> np.ndarray:
    """Shade the nearest primary hit of scene ∪ posed object per pixel; misses get the background."""
    obj = as_object_model(object_mesh, scale)
    view = view or SceneView.build(scene, cam, settings)
    position, orientation = object_pose
    return _compose(view, obj, position, orientation, settings)[0]


def render_mask(scene: Optional[Scene], object_mesh, object_pose, cam: Camera, scale: Optional[float] = None,
                view: Optional[SceneView] = None) -> np.ndarray:
    """0 where the object is the nearest primary hit, 255 elsewhere."""
    obj = as_object_model(object_mesh, scale)
    view = view or SceneView.build(scene, cam, RenderSettings())
    position, orientation = object_pose
    return _compose(view, obj, position, orientation, RenderSettings(), want_rgb=False)[1]


def render_video(scene: Optional[Scene], object_mesh, trajectory, cam: Camera,
                 settings: RenderSettings = RenderSettings(), scale: Optional[float] = None,
                 view: Optional[SceneView] = None) -> tuple[list[np.ndarray], list[np.ndarray]]:
    obj = as_object_model(object_mesh, scale)
    view = view or SceneView.build(scene, cam, settings)
    frames, masks = [], []
    for i in range(len(trajectory)):
        position, orientation = trajectory.pose(i)
        rgb, mask = _compose(view, obj, position, orientation, settings)
        frames.append(rgb)
        masks.append(mask)
    return frames, masks


# --------------------------------------------------------------------------
# PPM / PGM
# --------------------------------------------------------------------------

def _write(path, magic: bytes, data: np.ndarray):
    h, w = data.shape[:2]
    try:
        with open(path, "wb") as fh:
            fh.write(magic + b"\n%d %d\n255\n" % (w, h))
            fh.write(np.ascontiguousarray(data, dtype=np.uint8).tobytes())
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def write_frame(frame: np.ndarray, path) -> None:
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3 or frame.dtype != np.uint8:
        raise ValueError("frame must be an (H, W, 3) uint8 array")
    _write(path, b"P6", frame)


def write_mask(mask: np.ndarray, path) -> None:
    mask = np.asarray(mask)
    if mask.ndim != 2 or mask.dtype != np.uint8:
        raise ValueError("mask must be an (H, W) uint8 array")
    _write(path, b"P5", mask)


def _read(path, magic: bytes, channels: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            pos = raw.index(b"\n", pos) + 1
            continue
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError(f"{path}: truncated header")
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != magic:
        raise ValueError(f"{path}: expected {magic.decode()} image, found {tokens[0]!r}")
    w, h, maxval = (int(x) for x in tokens[1:])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 is supported")
    pos += 1  # single whitespace byte after maxval
    n = w * h * channels
    data = np.frombuffer(raw, dtype=np.uint8, count=n, offset=pos) if len(raw) - pos >= n else None
    if data is None:
        raise ValueError(f"{path}: truncated pixel data")
    return data.reshape((h, w, channels) if channels > 1 else (h, w)).copy()


def read_frame(path) -> np.ndarray:
    return _read(path, b"P6", 3)


def read_mask(path) -> np.ndarray:
    return _read(path, b"P5", 1)
