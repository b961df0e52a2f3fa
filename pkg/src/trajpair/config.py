"""Run configuration schema.

A config file is YAML or JSON whose keys mirror :class:`RunConfig`; every
section is optional and unknown keys are rejected.

Example::

    frames: 81
    fps: 16
    resolution: [320, 180]
    no_hit_probability: 0.5
    tasks: {drag: 9537, throw: 3113, roll: 3162, drop: 2867, static: 1564}
    physics: {restitution: 0.4, friction_coefficient: 0.5}
    objects: {primitives: [cube, sphere], obj_paths: [assets/mug.obj]}
    seeds: "0..49"
    workers: 4
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .physics import SimConfig
from .placement import PlacementConstraints
from .render import RenderSettings
from .scene import STRUCTURAL_KEYWORDS


def parse_seed_range(text) -> tuple[int, int]:
    """``"A..B"`` (inclusive) or a two-element sequence -> (A, B)."""
    if isinstance(text, str):
        parts = text.split("..")
        if len(parts) != 2:
            raise ValueError(f"seed range must look like A..B, got {text!r}")
        try:
            a, b = int(parts[0]), int(parts[1])
        except ValueError:
            raise ValueError(f"seed range bounds must be integers, got {text!r}") from None
    else:
        a, b = (int(x) for x in text)
    if a < 0 or b < a:
        raise ValueError(f"invalid seed range {a}..{b}")
    return a, b


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TaskWeights(_Section):
    drag: float = Field(9537, ge=0)
    throw: float = Field(3113, ge=0)
    roll: float = Field(3162, ge=0)
    drop: float = Field(2867, ge=0)
    static: float = Field(1564, ge=0)

    @model_validator(mode="after")
    def _some_positive(self):
        if not any(v > 0 for v in self.model_dump().values()):
            raise ValueError("at least one task weight must be positive")
        return self

    def probabilities(self) -> dict[str, float]:
        w = self.model_dump()
        total = sum(w.values())
        return {k: v / total for k, v in w.items()}


class TaskParams(_Section):
    throw_speed: float = Field(6.0, ge=0)
    roll_speed: float = Field(2.0, ge=0)
    spring_k: float = 50.0
    spring_c: float = 10.0
    drag_paths: dict[str, float] = {"circle": 3151, "scurve": 3184, "spiral": 3202}
    circle_radius: tuple[float, float] = (0.4, 0.8)
    scurve_amplitude: tuple[float, float] = (0.2, 0.45)
    scurve_length: tuple[float, float] = (1.0, 2.0)
    spiral_a: tuple[float, float] = (0.05, 0.15)
    spiral_b: tuple[float, float] = (0.04, 0.08)
    spiral_turns: tuple[float, float] = (1.0, 2.0)
    heading_jitter_deg: float = Field(45.0, ge=0, le=180)


class PhysicsParams(_Section):
    gravity: float = 9.81
    substep_hz: int = 240
    restitution: float = Field(0.4, ge=0, le=1)
    friction_coefficient: float = Field(0.5, ge=0)


class PlacementParams(_Section):
    clearance_margin: float = 0.02
    retry_budget: int = Field(256, ge=1)
    support_cos: float = 0.95
    air_band: tuple[float, float] = (0.2, 0.8)
    air_miss_range: tuple[float, float] = (0.5, 4.0)
    depth_sigma_frac: float = Field(0.1, ge=0)
    scale_fraction: tuple[float, float] = (0.07, 0.20)
    scale_budget: int = Field(16, ge=1)


class SceneParams(_Section):
    pool_size: int = Field(8, ge=1)
    pool_seed: int = 0
    room_width: tuple[float, float] = (5.0, 8.0)
    room_depth: tuple[float, float] = (5.0, 8.0)
    wall_height: float = 2.8
    walls: bool = True
    ceiling: bool = False
    clutter_count: tuple[int, int] = (2, 6)
    clutter_size: tuple[float, float] = (0.3, 0.9)
    clutter_height: tuple[float, float] = (0.3, 1.0)
    table_probability: float = Field(0.35, ge=0, le=1)
    clutter_budget: int = 200
    cameras: tuple[int, int] = (1, 4)
    eye_height: tuple[float, float] = (1.2, 1.8)
    vertical_fov_deg: float = Field(55.0, gt=0, lt=180)
    structural_keywords: tuple[str, ...] = STRUCTURAL_KEYWORDS


class ObjectParams(_Section):
    primitives: tuple[str, ...] = ("cube", "sphere", "cylinder", "cone")
    obj_paths: tuple[str, ...] = ()

    @model_validator(mode="after")
    def _non_empty(self):
        if not self.primitives and not self.obj_paths:
            raise ValueError("object pool is empty")
        return self


class RenderParams(_Section):
    background: tuple[int, int, int] = (40, 44, 52)
    light_direction: tuple[float, float, float] = (0.3, 0.2, 0.93)
    intensity: float = Field(0.75, ge=0)
    ambient: float = Field(0.25, ge=0)


class RunConfig(_Section):
    frames: int = Field(81, ge=1)
    fps: float = Field(16.0, gt=0)
    resolution: tuple[int, int] = (320, 180)
    tasks: TaskWeights = TaskWeights()
    task_params: TaskParams = TaskParams()
    no_hit_probability: float = Field(0.5, ge=0, le=1)
    physics: PhysicsParams = PhysicsParams()
    placement: PlacementParams = PlacementParams()
    scene: SceneParams = SceneParams()
    objects: ObjectParams = ObjectParams()
    render: RenderParams = RenderParams()
    output_root: str = "run"
    seeds: tuple[int, int] = (0, 9)
    workers: int = Field(1, ge=1)
    # explicit per-worker seed ranges; overrides the automatic split when given
    shards: Optional[tuple[tuple[int, int], ...]] = None

    @field_validator("seeds", mode="before")
    @classmethod
    def _seed_range(cls, v):
        return parse_seed_range(v)

    @field_validator("shards", mode="before")
    @classmethod
    def _shard_ranges(cls, v):
        if v is None:
            return None
        return tuple(parse_seed_range(r) for r in v)

    @field_validator("resolution")
    @classmethod
    def _resolution(cls, v):
        if min(v) < 16:
            raise ValueError("resolution must be at least 16x16")
        return v

    @model_validator(mode="after")
    def _substeps(self):
        self.sim_config()  # raises on a non-integer substep ratio
        return self

    def sim_config(self) -> SimConfig:
        p = self.physics
        return SimConfig(p.gravity, p.substep_hz, p.restitution, p.friction_coefficient, self.frames, self.fps)

    def placement_constraints(self) -> PlacementConstraints:
        return PlacementConstraints(**self.placement.model_dump())

    def render_settings(self) -> RenderSettings:
        return RenderSettings(**self.render.model_dump())

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path) -> RunConfig:
    """Parse a YAML/JSON config file; raises ``ValueError`` (incl. pydantic's ValidationError)."""
    text = Path(path).read_text()
    data = yaml.safe_load(text) or {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: top level must be a mapping")
    return RunConfig.model_validate(data)
