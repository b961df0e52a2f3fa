"""End-to-end paired-video generation.

Per seed: pick a procedural scene, camera, object and task; preflight the
camera; sample a placement pair with shared scale; optionally strip clutter
from the pair's trajectory corridor (no-hit mode); simulate and render both
videos; gate on the canonical output check; write frames, masks and a
manifest. Everything downstream of ``(config, seed)`` is deterministic.

Output layout::

    <out>/run.manifest
    <out>/shard_<k>/shard.manifest
    <out>/shard_<k>/pair_<seed>/{A,B}/frame_%05d.ppm
    <out>/shard_<k>/pair_<seed>/{A,B}/mask_%05d.pgm
    <out>/shard_<k>/pair_<seed>/pair.manifest
"""

from __future__ import annotations

import json
import logging
import math
import shutil
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .camera import Camera, pixel_directions
from .config import RunConfig
from .geometry import Ray, TriMesh, load_obj, ray_cast, ray_cast_batch
from .physics import BodyState, PathShape, PathSpec, SimulationDivergedError, TaskKind, TaskSpec, simulate
from .placement import NoValidPlacementError, PlacementPair, sample_pair
from .render import ObjectModel, SceneView, read_frame, read_mask, render_video, write_frame, write_mask
from .scene import Scene
from .scenemod import filter_scene, nominal_corridor
from .shapes import box, floor_quad, primitive, quad

log = logging.getLogger(__name__)

PAIR_MANIFEST = "pair.manifest"
SHARD_MANIFEST = "shard.manifest"
RUN_MANIFEST = "run.manifest"
PREFLIGHT_GRID = (16, 9)
MIN_COVERAGE = 0.30
MIN_SUPPORT = 0.05


class SeedOverlapError(ValueError):
    pass


def dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# --------------------------------------------------------------------------
# procedural scenes
# --------------------------------------------------------------------------

def _quad_facing(corners, normal) -> TriMesh:
    m = quad(corners)
    if m.normals[0] @ np.asarray(normal, dtype=np.float64) < 0:
        m = quad(corners[::-1])
    return m


def _table(x0, y0, x1, y1, height, top=0.04, leg=0.06) -> TriMesh:
    from .geometry import merge_meshes
    parts = [box((x0, y0, height - top), (x1, y1, height))]
    for lx, ly in ((x0, y0), (x1 - leg, y0), (x0, y1 - leg), (x1 - leg, y1 - leg)):
        parts.append(box((lx, ly, 0.0), (lx + leg, ly + leg, height - top)))
    return merge_meshes(parts)[0]


@dataclass(frozen=True, eq=False)
class ProceduralScene:
    scene: Scene
    cameras: tuple
    room: tuple
    warnings: tuple = ()


def generate_procedural_scene(rng: np.random.Generator, spec, resolution=(320, 180)) -> ProceduralScene:
    """Room (floor, walls, optional ceiling) with non-overlapping clutter and 1-4 cameras."""
    W = float(rng.uniform(*spec.room_width))
    D = float(rng.uniform(*spec.room_depth))
    H = spec.wall_height
    named = [("floor", floor_quad(0.0, 0.0, W, D))]
    if spec.walls:
        named += [
            ("wall_south", _quad_facing([(0, 0, 0), (W, 0, 0), (W, 0, H), (0, 0, H)], (0, 1, 0))),
            ("wall_north", _quad_facing([(0, D, 0), (W, D, 0), (W, D, H), (0, D, H)], (0, -1, 0))),
            ("wall_west", _quad_facing([(0, 0, 0), (0, D, 0), (0, D, H), (0, 0, H)], (1, 0, 0))),
            ("wall_east", _quad_facing([(W, 0, 0), (W, D, 0), (W, D, H), (W, 0, H)], (-1, 0, 0))),
        ]
    if spec.ceiling:
        named.append(("ceiling", _quad_facing([(0, 0, H), (W, 0, H), (W, D, H), (0, D, H)], (0, 0, -1))))

    warnings = []
    n_clutter = int(rng.integers(spec.clutter_count[0], spec.clutter_count[1] + 1))
    footprints: list[tuple[float, float, float, float]] = []
    gap, margin = 0.15, 0.1
    attempts = 0
    while len(footprints) < n_clutter and attempts < spec.clutter_budget:
        attempts += 1
        is_table = rng.random() < spec.table_probability
        sx, sy = (float(v) for v in rng.uniform(*spec.clutter_size, size=2))
        if is_table:
            sx, sy = 1.5 * sx + 0.3, 1.2 * sy + 0.3
        h = 0.75 if is_table else float(rng.uniform(*spec.clutter_height))
        if sx > W - 2 * margin or sy > D - 2 * margin:
            continue
        x0 = float(rng.uniform(margin, W - margin - sx))
        y0 = float(rng.uniform(margin, D - margin - sy))
        fp = (x0, y0, x0 + sx, y0 + sy)
        if any(fp[0] < b[2] + gap and b[0] < fp[2] + gap and fp[1] < b[3] + gap and b[1] < fp[3] + gap
               for b in footprints):
            continue
        footprints.append(fp)
        i = len(footprints) - 1
        if is_table:
            named.append((f"table_{i}", _table(*fp, h)))
        else:
            named.append((f"box_{i}", box((fp[0], fp[1], 0.0), (fp[2], fp[3], h))))
    if len(footprints) < n_clutter:
        warnings.append(f"placed {len(footprints)} of {n_clutter} clutter objects")

    bounds_pts = np.array([[0, 0, 0], [W, D, H]], dtype=np.float64)
    from .geometry import Aabb
    scene = Scene.from_meshes(named, name="room", bounds=Aabb.from_points(bounds_pts),
                              keywords=spec.structural_keywords)

    cams = []
    n_cams = int(rng.integers(spec.cameras[0], spec.cameras[1] + 1))
    fov = math.radians(spec.vertical_fov_deg)
    inset = 0.35
    for _ in range(n_cams):
        side = int(rng.integers(4))
        u = float(rng.uniform(0.25, 0.75))
        pos = [(u * W, inset), (u * W, D - inset), (inset, u * D), (W - inset, u * D)][side]
        eye = float(rng.uniform(*spec.eye_height))
        target = (W / 2 + rng.uniform(-0.2, 0.2) * W, D / 2 + rng.uniform(-0.2, 0.2) * D, float(rng.uniform(0.0, 0.5)))
        cams.append(Camera.look_at((pos[0], pos[1], eye), target, fov, *resolution))
    return ProceduralScene(scene, tuple(cams), (W, D, H), tuple(warnings))


@lru_cache(maxsize=64)
def _pooled_scene(scene_json: str, index: int, resolution: tuple) -> ProceduralScene:
    from .config import SceneParams
    spec = SceneParams.model_validate_json(scene_json)
    rng = np.random.default_rng([spec.pool_seed, index])
    return generate_procedural_scene(rng, spec, resolution)


def scene_from_pool(cfg: RunConfig, index: int) -> ProceduralScene:
    """Scenes (and their collision caches) are built once per process and reused."""
    return _pooled_scene(cfg.scene.model_dump_json(), index, tuple(cfg.resolution))


@lru_cache(maxsize=64)
def _load_object(name: str) -> TriMesh:
    if name.startswith("obj:"):
        return load_obj(name[4:])
    return primitive(name)


def object_pool(cfg: RunConfig) -> list[str]:
    return list(cfg.objects.primitives) + [f"obj:{p}" for p in cfg.objects.obj_paths]


# --------------------------------------------------------------------------
# preflight and output checks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    ok: bool
    reason: Optional[str] = None
    details: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.ok


def preflight(scene: Scene, cam: Camera, task) -> CheckResult:
    """Coarse 16x9 ray grid: enough geometry in view, and support surfaces for ground tasks. No rendering."""
    gx, gy = PREFLIGHT_GRID
    xs = (np.arange(gx) + 0.5) * cam.width / gx - 0.5
    ys = (np.arange(gy) + 0.5) * cam.height / gy - 0.5
    X, Y = np.meshgrid(xs, ys)
    dirs = pixel_directions(cam, X.ravel(), Y.ravel())
    t, face = ray_cast_batch(scene.bvh, cam.position, dirs)
    hit = face >= 0
    coverage = float(hit.mean())
    support = 0.0
    if hit.any():
        n = scene.bvh.mesh.normals[face[hit]]
        n = np.where(((n * dirs[hit]).sum(axis=1) > 0)[:, None], -n, n)
        support = float((n[:, 2] >= 0.95).mean())
    details = {"coverage": coverage, "support_fraction": support}
    if coverage < MIN_COVERAGE:
        return CheckResult(False, "insufficient geometry coverage", details)
    kind = TaskKind(getattr(task, "kind", task))
    if not kind.is_air and support < MIN_SUPPORT:
        return CheckResult(False, "no support surface", details)
    return CheckResult(True, None, details)


def _frames_and_resolution(cfg):
    return cfg.frames, tuple(cfg.resolution)


def canonical_output_check(frames_a, masks_a, frames_b, masks_b, cfg) -> CheckResult:
    """Frame counts, resolution, mask binarity, and a non-empty first mask in both videos."""
    n, (w, h) = _frames_and_resolution(cfg)
    seqs = {"A frames": frames_a, "A masks": masks_a, "B frames": frames_b, "B masks": masks_b}
    for name, seq in seqs.items():
        if len(seq) != n:
            return CheckResult(False, "frame count", {"sequence": name, "count": len(seq), "expected": n})
    for name, seq in seqs.items():
        for i, img in enumerate(seq):
            if img.shape[:2] != (h, w):
                return CheckResult(False, "resolution", {"sequence": name, "frame": i})
    for name, seq in (("A masks", masks_a), ("B masks", masks_b)):
        for i, m in enumerate(seq):
            if not np.isin(m, (0, 255)).all():
                return CheckResult(False, "mask not binary", {"sequence": name, "frame": i})
    for name, seq in (("A", masks_a), ("B", masks_b)):
        if not (seq[0] == 0).any():
            return CheckResult(False, "object not visible at start", {"video": name})
    return CheckResult(True)


def load_pair_sequences(pair_dir) -> tuple[list, list, list, list]:
    pair_dir = Path(pair_dir)
    out = []
    for video in ("A", "B"):
        d = pair_dir / video
        out.append([read_frame(p) for p in sorted(d.glob("frame_*.ppm"))])
        out.append([read_mask(p) for p in sorted(d.glob("mask_*.pgm"))])
    return tuple(out)


# --------------------------------------------------------------------------
# per-pair generation
# --------------------------------------------------------------------------

@dataclass
class PairRecord:
    seed: int
    ok: bool = False
    rejection: Optional[str] = None
    task: Optional[dict] = None
    scene: Optional[dict] = None
    camera: Optional[dict] = None
    object: Optional[dict] = None
    placement: Optional[dict] = None
    hit: Optional[bool] = None
    files: Optional[dict] = None
    path: Optional[str] = None
    config_hash: Optional[str] = None
    # in-memory only: wall-clock timings would break byte-identical outputs
    timing: dict = field(default_factory=dict)
    trajectories: Optional[tuple] = field(default=None, repr=False)

    def manifest(self) -> dict:
        d = {"seed": self.seed, "ok": self.ok, "rejection": self.rejection, "task": self.task,
             "scene": self.scene, "camera": self.camera, "object": self.object, "placement": self.placement,
             "hit": self.hit, "files": self.files, "config_hash": self.config_hash}
        return d

    def summary(self) -> dict:
        return {"seed": self.seed, "ok": self.ok, "rejection": self.rejection, "path": self.path,
                "task": None if self.task is None else self.task["kind"], "hit": self.hit}


def _horizontal(v) -> np.ndarray:
    h = np.array([v[0], v[1], 0.0])
    n = np.linalg.norm(h)
    return h / n if n > 1e-9 else np.array([1.0, 0.0, 0.0])


def sample_task(rng: np.random.Generator, cfg: RunConfig, cam: Camera) -> TaskSpec:
    probs = cfg.tasks.probabilities()
    kinds = list(probs)
    kind = TaskKind(kinds[int(rng.choice(len(kinds), p=[probs[k] for k in kinds]))])
    tp = cfg.task_params
    heading = _horizontal(cam.forward)
    path = None
    if kind is TaskKind.DRAG:
        names = list(tp.drag_paths)
        w = np.array([tp.drag_paths[k] for k in names], dtype=np.float64)
        shape = PathShape(names[int(rng.choice(len(names), p=w / w.sum()))])
        jitter = math.radians(float(rng.uniform(-tp.heading_jitter_deg, tp.heading_jitter_deg)))
        c, s = math.cos(jitter), math.sin(jitter)
        ph = (c * heading[0] - s * heading[1], s * heading[0] + c * heading[1], 0.0)
        path = PathSpec(shape, heading=ph,
                        radius=float(rng.uniform(*tp.circle_radius)),
                        amplitude=float(rng.uniform(*tp.scurve_amplitude)),
                        length=float(rng.uniform(*tp.scurve_length)),
                        spiral_a=float(rng.uniform(*tp.spiral_a)),
                        spiral_b=float(rng.uniform(*tp.spiral_b)),
                        turns=float(rng.uniform(*tp.spiral_turns)))
    return TaskSpec(kind, tuple(heading), tp.throw_speed, tp.roll_speed, path, tp.spring_k, tp.spring_c)


def _supports(scene: Scene, pair) -> list[str]:
    """Names of the objects ground placements rest on; removing them would drop the object."""
    names = []
    for p in (pair.source, pair.target):
        if p.support_normal is None:
            continue
        hit = ray_cast(scene.bvh, Ray(p.position, -p.support_normal))
        if hit is not None:
            names.append(scene.object(hit.object_id).name)
    return names


def _video_files(prefix: str, frames: int) -> dict:
    return {"frames": [f"{prefix}/frame_{i:05d}.ppm" for i in range(frames)],
            "masks": [f"{prefix}/mask_{i:05d}.pgm" for i in range(frames)]}


def generate_pair(seed: int, cfg: RunConfig, out_dir=None, keep_trajectories: bool = False) -> PairRecord:
    """Generate one pair; writes into ``out_dir`` (the pair directory) on success when given."""
    t_start = time.perf_counter()
    rec = PairRecord(seed=seed, config_hash=cfg.config_hash())
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]
    r_scene, r_task, r_place, r_nohit = streams
    sim_cfg = cfg.sim_config()

    scene_idx = int(r_scene.integers(cfg.scene.pool_size))
    world = scene_from_pool(cfg, scene_idx)
    cam_idx = int(r_scene.integers(len(world.cameras)))
    cam = world.cameras[cam_idx]
    pool = object_pool(cfg)
    obj_name = pool[int(r_scene.integers(len(pool)))]
    task = sample_task(r_task, cfg, cam)
    no_hit = bool(r_nohit.random() < cfg.no_hit_probability)
    rec.task = task.to_dict()
    rec.camera = cam.to_dict() | {"index": cam_idx}
    rec.scene = {"pool_index": scene_idx, "room": list(world.room), "objects": world.scene.names,
                 "warnings": list(world.warnings)}

    def reject(reason: str) -> PairRecord:
        rec.rejection = reason
        rec.timing["total_s"] = time.perf_counter() - t_start
        return rec

    try:
        mesh = _load_object(obj_name)
    except Exception as exc:  # ingestion problems are per-seed failures
        return reject(f"object: {exc}")
    rec.object = {"name": obj_name}

    pf = preflight(world.scene, cam, task)
    if not pf:
        return reject(f"preflight: {pf.reason}")

    try:
        pair = sample_pair(r_place, world.scene, cam, task, mesh, cfg.placement_constraints())
    except NoValidPlacementError as exc:
        return reject(f"placement: {exc}")
    rec.object.update(scale=pair.scale, proxy_radius=pair.proxy_radius)
    rec.placement = pair.to_dict()
    rec.timing["placement_s"] = time.perf_counter() - t_start

    sim_scene = world.scene
    removed: list[str] = []
    try:
        if no_hit:
            supports = _supports(world.scene, pair)
            corridor = nominal_corridor(task, pair, pair.proxy_radius, sim_cfg, world.scene, supports)
            sim_scene = filter_scene(world.scene, corridor, supports)
            kept = set(sim_scene.names)
            removed = [n for n in world.scene.names if n not in kept]
        rec.hit = not no_hit
        rec.scene["removed"] = removed
        trajs = []
        for p in (pair.source, pair.target):
            body = BodyState(tuple(p.position), proxy_radius=pair.proxy_radius)
            trajs.append(simulate(body, task, sim_scene.bvh, sim_cfg, support_normal=p.support_normal))
    except SimulationDivergedError as exc:
        return reject(f"simulation diverged: {exc}")
    rec.timing["simulate_s"] = time.perf_counter() - t_start
    if keep_trajectories:
        rec.trajectories = tuple(trajs)

    settings = cfg.render_settings()
    view = SceneView.build(sim_scene, cam, settings)
    obj = ObjectModel(mesh, pair.scale)
    frames_a, masks_a = render_video(sim_scene, obj, trajs[0], cam, settings, view=view)
    frames_b, masks_b = render_video(sim_scene, obj, trajs[1], cam, settings, view=view)
    rec.timing["render_s"] = time.perf_counter() - t_start

    check = canonical_output_check(frames_a, masks_a, frames_b, masks_b, cfg)
    if not check:
        return reject(f"output check: {check.reason}")

    rec.ok = True
    rec.files = {"A": _video_files("A", cfg.frames), "B": _video_files("B", cfg.frames)}
    if out_dir is not None:
        out_dir = Path(out_dir)
        try:
            _write_pair(out_dir, rec, (frames_a, masks_a), (frames_b, masks_b))
        except OSError as exc:
            shutil.rmtree(out_dir, ignore_errors=True)
            rec.ok, rec.files = False, None
            return reject(f"io: {exc}")
        rec.path = str(out_dir)
    rec.timing["total_s"] = time.perf_counter() - t_start
    return rec


def _write_pair(out_dir: Path, rec: PairRecord, a, b) -> None:
    for name, (frames, masks) in (("A", a), ("B", b)):
        d = out_dir / name
        d.mkdir(parents=True, exist_ok=True)
        for i, (f, m) in enumerate(zip(frames, masks)):
            write_frame(f, d / f"frame_{i:05d}.ppm")
            write_mask(m, d / f"mask_{i:05d}.pgm")
    dump_json(rec.manifest(), out_dir / PAIR_MANIFEST)


# --------------------------------------------------------------------------
# sharded runs
# --------------------------------------------------------------------------

def run_shard(cfg: RunConfig, seeds: Sequence[int], worker_id: int, out_root) -> dict:
    """Process seeds independently under ``shard_<worker_id>/``; per-seed failures never abort the shard."""
    shard_dir = Path(out_root) / f"shard_{worker_id}"
    shard_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for seed in seeds:
        pair_dir = shard_dir / f"pair_{seed}"
        try:
            rec = generate_pair(seed, cfg, pair_dir)
        except Exception as exc:  # noqa: BLE001 - a bad seed must not take the shard down
            log.exception("seed %d failed", seed)
            shutil.rmtree(pair_dir, ignore_errors=True)
            rec = PairRecord(seed=seed, rejection=f"error: {type(exc).__name__}: {exc}")
        summary = rec.summary()
        if rec.path is not None:
            summary["path"] = str(Path(rec.path).relative_to(out_root))
        records.append(summary)
    successes = sum(r["ok"] for r in records)
    manifest = {
        "worker_id": worker_id,
        "seeds": list(seeds),
        "records": records,
        "successes": successes,
        "rejections": len(records) - successes,
        "config_hash": cfg.config_hash(),
    }
    dump_json(manifest, shard_dir / SHARD_MANIFEST)
    return manifest


def split_seeds(seeds: tuple[int, int], workers: int) -> list[tuple[int, int]]:
    a, b = seeds
    n = b - a + 1
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).round().astype(int)
    return [(a + int(lo), a + int(hi) - 1) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]


def check_disjoint(ranges: Sequence[tuple[int, int]]) -> None:
    ordered = sorted(ranges)
    for (a0, a1), (b0, b1) in zip(ordered, ordered[1:]):
        if b0 <= a1:
            raise SeedOverlapError(f"disjointness violated: seed ranges {a0}..{a1} and {b0}..{b1} overlap")


def _shard_job(args):
    cfg_json, seeds, worker_id, out_root = args
    return run_shard(RunConfig.model_validate_json(cfg_json), seeds, worker_id, out_root)


def run(cfg: RunConfig, out_root=None, seeds: Optional[tuple[int, int]] = None,
        workers: Optional[int] = None) -> dict:
    """Run every shard and merge the shard manifests into ``run.manifest``."""
    out_root = Path(out_root if out_root is not None else cfg.output_root)
    seeds = seeds if seeds is not None else cfg.seeds
    workers = workers if workers is not None else cfg.workers
    ranges = list(cfg.shards) if cfg.shards else split_seeds(seeds, workers)
    check_disjoint(ranges)
    out_root.mkdir(parents=True, exist_ok=True)

    jobs = [(cfg.model_dump_json(), list(range(a, b + 1)), k, str(out_root)) for k, (a, b) in enumerate(ranges)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            shards = list(pool.map(_shard_job, jobs))
    else:
        shards = [_shard_job(j) for j in jobs]

    records = [r for s in shards for r in s["records"]]
    reasons = Counter(r["rejection"] for r in records if not r["ok"])
    ok = [r for r in records if r["ok"]]
    manifest = {
        "config": cfg.model_dump(mode="json"),
        "config_hash": cfg.config_hash(),
        "shards": [{"worker_id": s["worker_id"], "manifest": f"shard_{s['worker_id']}/{SHARD_MANIFEST}",
                    "seeds": [s["seeds"][0], s["seeds"][-1]] if s["seeds"] else [],
                    "successes": s["successes"], "rejections": s["rejections"]} for s in shards],
        "seeds_processed": len(records),
        "pairs": sum(s["successes"] for s in shards),
        "rejections": dict(sorted(reasons.items())),
        "no_hit_pairs": sum(1 for r in ok if r["hit"] is False),
        "hit_pairs": sum(1 for r in ok if r["hit"] is True),
        "records": records,
    }
    dump_json(manifest, out_root / RUN_MANIFEST)
    return manifest
