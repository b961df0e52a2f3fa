"""``trajpair`` command line.

Exit codes: 0 success, 1 usage or input error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import metrics
from .config import RunConfig, load_config, parse_seed_range
from .pipeline import PAIR_MANIFEST, SeedOverlapError, canonical_output_check, load_pair_sequences, run
from .render import read_frame, read_mask

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _seed_range(text):
    try:
        return parse_seed_range(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc))


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="trajpair", description="Paired trajectory-offset video generation and evaluation.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="generate paired videos for a seed range")
    g.add_argument("--config", type=Path, help="YAML/JSON run config (defaults apply when omitted)")
    g.add_argument("--seeds", type=_seed_range, help="inclusive seed range A..B (overrides config)")
    g.add_argument("--out", type=Path, help="output root (overrides config)")
    g.add_argument("--workers", type=_positive_int, help="worker processes (overrides config)")

    i = sub.add_parser("inspect", help="summarize and re-check one generated pair")
    i.add_argument("--pair", type=Path, required=True)

    e = sub.add_parser("eval", help="score predicted frames/masks against ground truth")
    e.add_argument("--pred", type=Path, required=True)
    e.add_argument("--gt", type=Path, required=True)
    e.add_argument("--metric", choices=("iou", "ssim"), required=True)
    e.add_argument("--report", type=Path, help="per-frame JSON report path (default: ./<metric>_report.json)")

    r = sub.add_parser("rank", help="fit Bradley-Terry utilities to pairwise votes")
    r.add_argument("--votes", type=Path, required=True)
    r.add_argument("--alpha", type=float, default=0.01)
    r.add_argument("--report", type=Path, help="JSON report path (default: ./rank_report.json)")
    return p


# --------------------------------------------------------------------------

def cmd_generate(args) -> int:
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ValidationError as exc:
        raise UsageError(f"invalid config {args.config}:\n{exc}")
    except (OSError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}")
    seeds = args.seeds or cfg.seeds
    workers = args.workers or cfg.workers
    out = args.out or Path(cfg.output_root)
    t0 = time.perf_counter()
    try:
        manifest = run(cfg, out, seeds, workers)
    except SeedOverlapError as exc:
        raise UsageError(str(exc))
    elapsed = time.perf_counter() - t0
    print(f"seeds {seeds[0]}..{seeds[1]}: {manifest['seeds_processed']} attempted, "
          f"{manifest['pairs']} pairs written ({manifest['no_hit_pairs']} no-hit) in {elapsed:.1f}s")
    for reason, count in manifest["rejections"].items():
        print(f"  rejected {count:4d}  {reason}")
    print(f"manifest: {out / 'run.manifest'}")
    return EXIT_OK


def cmd_inspect(args) -> int:
    mpath = args.pair / PAIR_MANIFEST
    if not mpath.is_file():
        print(f"error: no manifest at {mpath}", file=sys.stderr)
        return EXIT_RUNTIME
    m = json.loads(mpath.read_text())
    cfg = RunConfig(frames=len(m["files"]["A"]["frames"]), resolution=(m["camera"]["width"], m["camera"]["height"]))
    delta = np.asarray(m["placement"]["delta"])
    print(f"seed:   {m['seed']}")
    print(f"task:   {m['task']['kind']}")
    print(f"hit:    {m['hit']}")
    print(f"delta:  [{', '.join(f'{d:.6f}' for d in delta)}]")
    fa, ma, fb, mb = load_pair_sequences(args.pair)
    print(f"frames: A {len(fa)}/{len(ma)}  B {len(fb)}/{len(mb)}  (frames/masks, expected {cfg.frames})")
    check = canonical_output_check(fa, ma, fb, mb, cfg)
    if check:
        print("check:  pass")
        return EXIT_OK
    print(f"check:  fail ({check.reason})")
    return EXIT_RUNTIME


def _load_dir(d: Path, kind: str):
    if not d.is_dir():
        raise UsageError(f"not a directory: {d}")
    pattern, reader = ("mask_*.pgm", read_mask) if kind == "mask" else ("frame_*.ppm", read_frame)
    return [reader(p) for p in sorted(d.glob(pattern))]


def cmd_eval(args) -> int:
    try:
        if args.metric == "iou":
            pred, gt = _load_dir(args.pred, "mask"), _load_dir(args.gt, "mask")
            per = metrics.iou_per_frame(pred, gt)
            mean = metrics.iou_traj(pred, gt)
        else:
            pred, gt = _load_dir(args.pred, "frame"), _load_dir(args.gt, "frame")
            gt_masks = _load_dir(args.gt, "mask")
            pred_masks = _load_dir(args.pred, "mask") or None
            per = metrics.ssim_per_frame(pred, gt, gt_masks, pred_masks)
            mean = float(np.mean(per))
    except metrics.MetricError as exc:
        raise UsageError(str(exc))
    report = args.report or Path(f"{args.metric}_report.json")
    metrics.write_report(report, args.metric, per, mean, pred=str(args.pred), gt=str(args.gt))
    print(f"{args.metric}: {mean:.4f}")
    return EXIT_OK


def cmd_rank(args) -> int:
    try:
        votes = metrics.load_votes(args.votes)
    except OSError as exc:
        raise UsageError(f"cannot read votes: {exc}")
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.alpha < 0:
        raise UsageError("--alpha must be non-negative")
    try:
        u = metrics.bt_fit_ilsr(votes, args.alpha)
    except ValueError as exc:
        raise UsageError(str(exc))
    # ties within solver tolerance fall back to the item name
    order = sorted(range(len(u)), key=lambda k: (-round(float(u[k]), 9), votes.items[k]))
    width = max(len(n) for n in votes.items)
    for k in order:
        print(f"{votes.items[k]:<{width}}  {round(float(u[k]), 4) + 0.0:.4f}")
    doc = {"alpha": args.alpha, "votes": len(votes.votes),
           "utilities": {votes.items[k]: float(u[k]) for k in order}}
    (args.report or Path("rank_report.json")).write_text(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "inspect": cmd_inspect, "eval": cmd_eval, "rank": cmd_rank}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001
        logging.getLogger(__name__).debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
