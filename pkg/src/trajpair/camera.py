"""Pinhole camera: pixel rays, projection, screen boxes and point visibility.

Image convention: pixel (i, j) covers [i, i+1) x [j, j+1), its center is at
(i + 0.5, j + 0.5); x grows to the right, y grows downward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import Bvh, Ray, normalize, ray_cast, vec3

VISIBILITY_EPS = 1e-4


@dataclass(frozen=True)
class Bbox2D:
    """Inclusive integer pixel box."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"invalid box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def max_side(self) -> int:
        return max(self.width, self.height)

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class Camera:
    position: np.ndarray
    forward: np.ndarray
    up: np.ndarray
    vertical_fov: float
    width: int
    height: int

    def __post_init__(self):
        object.__setattr__(self, "position", vec3(self.position))
        f, u = vec3(self.forward), vec3(self.up)
        if abs(np.linalg.norm(f) - 1) > 1e-9 or abs(np.linalg.norm(u) - 1) > 1e-9:
            raise ValueError("forward and up must be unit vectors")
        if abs(float(f @ u)) > 1e-9:
            raise ValueError("up must be perpendicular to forward")
        if not 0 < self.vertical_fov < math.pi:
            raise ValueError("vertical_fov must lie in (0, pi)")
        if self.width < 16 or self.height < 16:
            raise ValueError("camera resolution must be at least 16x16")
        object.__setattr__(self, "forward", f)
        object.__setattr__(self, "up", u)

    @classmethod
    def look_at(cls, position, target, vertical_fov: float, width: int, height: int,
                world_up=(0.0, 0.0, 1.0)) -> "Camera":
        f = normalize(vec3(target) - vec3(position))
        right = np.cross(f, vec3(world_up))
        if np.linalg.norm(right) < 1e-9:
            raise ValueError("view direction is parallel to world up")
        right = normalize(right)
        up = normalize(np.cross(right, f))
        return cls(position, f, up, vertical_fov, width, height)

    @property
    def right(self) -> np.ndarray:
        return np.cross(self.forward, self.up)

    @property
    def focal_px(self) -> float:
        return 0.5 * self.height / math.tan(0.5 * self.vertical_fov)

    def to_dict(self) -> dict:
        return {
            "position": self.position.tolist(),
            "forward": self.forward.tolist(),
            "up": self.up.tolist(),
            "vertical_fov": self.vertical_fov,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Camera":
        return cls(d["position"], d["forward"], d["up"], d["vertical_fov"], d["width"], d["height"])


def pixel_ray(cam: Camera, px: float, py: float) -> Ray:
    if not (0 <= px < cam.width and 0 <= py < cam.height):
        raise ValueError(f"pixel ({px}, {py}) outside {cam.width}x{cam.height} frame")
    d = cam.focal_px * cam.forward + (px - 0.5 * cam.width) * cam.right - (py - 0.5 * cam.height) * cam.up
    return Ray(cam.position, normalize(d))


def pixel_directions(cam: Camera, xs=None, ys=None) -> np.ndarray:
    """Unit ray directions through pixel centers; full frame (row-major) by default."""
    if xs is None:
        ys, xs = np.mgrid[0:cam.height, 0:cam.width]
        xs, ys = xs.ravel(), ys.ravel()
    xs = np.asarray(xs, dtype=np.float64) + 0.5
    ys = np.asarray(ys, dtype=np.float64) + 0.5
    d = (cam.focal_px * cam.forward[None, :]
         + (xs - 0.5 * cam.width)[:, None] * cam.right[None, :]
         - (ys - 0.5 * cam.height)[:, None] * cam.up[None, :])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def project_point(cam: Camera, p) -> Optional[tuple[float, float]]:
    rel = vec3(p) - cam.position
    z = float(rel @ cam.forward)
    if z <= 1e-9:
        return None
    f = cam.focal_px
    return (0.5 * cam.width + f * float(rel @ cam.right) / z,
            0.5 * cam.height - f * float(rel @ cam.up) / z)


def project_points(cam: Camera, points) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised projection. Returns ``(xy, in_front)``; rows behind the camera are nan."""
    rel = np.asarray(points, dtype=np.float64).reshape(-1, 3) - cam.position
    z = rel @ cam.forward
    front = z > 1e-9
    f = cam.focal_px
    with np.errstate(divide="ignore", invalid="ignore"):
        x = 0.5 * cam.width + f * (rel @ cam.right) / z
        y = 0.5 * cam.height - f * (rel @ cam.up) / z
    xy = np.stack([x, y], axis=1)
    xy[~front] = np.nan
    return xy, front


def screen_extent(cam: Camera, points) -> Optional[tuple[float, float, float, float]]:
    """Unclipped continuous projected extent (x0, y0, x1, y1), or None if any point is behind the camera."""
    xy, front = project_points(cam, points)
    if not front.all():
        return None
    return (float(xy[:, 0].min()), float(xy[:, 1].min()), float(xy[:, 0].max()), float(xy[:, 1].max()))


def screen_bbox(cam: Camera, points) -> Optional[Bbox2D]:
    """Tight pixel box over projections of points in front of the camera, clipped to the frame.

    Returns None when no point is in front of the camera or the box lies wholly outside the frame.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        raise ValueError("screen_bbox needs at least one point")
    xy, front = project_points(cam, pts)
    if not front.any():
        return None
    xy = np.floor(xy[front])
    x0, y0 = xy.min(axis=0)
    x1, y1 = xy.max(axis=0)
    if x1 < 0 or y1 < 0 or x0 > cam.width - 1 or y0 > cam.height - 1:
        return None
    return Bbox2D(int(max(x0, 0)), int(max(y0, 0)), int(min(x1, cam.width - 1)), int(min(y1, cam.height - 1)))


def point_visible(cam: Camera, scene_bvh: Optional[Bvh], p) -> bool:
    """True iff ``p`` projects inside the frame and nothing in the scene blocks the line of sight."""
    uv = project_point(cam, p)
    if uv is None or not (0 <= uv[0] < cam.width and 0 <= uv[1] < cam.height):
        return False
    rel = vec3(p) - cam.position
    dist = float(np.linalg.norm(rel))
    limit = dist - VISIBILITY_EPS
    if limit <= 0:
        return True
    return ray_cast(scene_bvh, Ray(cam.position, rel / dist, limit)) is None
