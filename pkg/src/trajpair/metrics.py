"""Evaluation: box IoU trajectory adherence, background SSIM, Bradley-Terry ranking.

Masks follow the renderer convention (0 = object, 255 = background). Boxes
use inclusive pixel coordinates throughout, so a single pixel has area 1.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .camera import Bbox2D

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = (0.01 * 255) ** 2
SSIM_C2 = (0.03 * 255) ** 2
DILATION_RADIUS = 5
LUMA = np.array([0.299, 0.587, 0.114])


class MetricError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# boxes
# --------------------------------------------------------------------------

def _check_mask(mask) -> np.ndarray:
    m = np.asarray(mask)
    if m.ndim != 2:
        raise MetricError(f"mask must be 2-D, got shape {m.shape}")
    if not np.isin(m, (0, 255)).all():
        raise MetricError("mask must be binary (0 or 255)")
    return m


def bbox_from_mask(mask) -> Optional[Bbox2D]:
    m = _check_mask(mask) == 0
    if not m.any():
        return None
    ys = np.flatnonzero(m.any(axis=1))
    xs = np.flatnonzero(m.any(axis=0))
    return Bbox2D(int(xs[0]), int(ys[0]), int(xs[-1]), int(ys[-1]))


def iou(a: Bbox2D, b: Bbox2D) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min) + 1
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min) + 1
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def _check_videos(pred, gt, what: str):
    if len(pred) != len(gt):
        raise MetricError(f"{what} length mismatch: {len(pred)} vs {len(gt)}")
    if len(gt) == 0:
        raise MetricError(f"empty {what} sequence")
    shape = np.shape(gt[0])
    for i, (p, g) in enumerate(zip(pred, gt)):
        if np.shape(p) != shape or np.shape(g) != shape:
            raise MetricError(f"{what} resolution mismatch at frame {i}")


def iou_per_frame(pred_masks: Sequence, gt_masks: Sequence) -> list[Optional[float]]:
    """Per-frame box IoU; ``None`` where the ground truth has no object."""
    _check_videos(pred_masks, gt_masks, "mask")
    out = []
    for p, g in zip(pred_masks, gt_masks):
        gb = bbox_from_mask(g)
        if gb is None:
            out.append(None)
            continue
        pb = bbox_from_mask(p)
        out.append(0.0 if pb is None else iou(pb, gb))
    return out


def iou_traj(pred_masks: Sequence, gt_masks: Sequence) -> float:
    vals = [v for v in iou_per_frame(pred_masks, gt_masks) if v is not None]
    if not vals:
        raise MetricError("no frames with a ground-truth object")
    return float(np.mean(vals))


# --------------------------------------------------------------------------
# SSIM
# --------------------------------------------------------------------------

def _gaussian_taps(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _luma(img) -> np.ndarray:
    a = np.asarray(img, dtype=np.float64)
    return a @ LUMA if a.ndim == 3 else a


def _window_mean(x: np.ndarray) -> np.ndarray:
    """Gaussian-weighted mean over every fully-inside 11x11 window ("valid" mode)."""
    g = _gaussian_taps()
    h = SSIM_WINDOW // 2
    y = ndimage.correlate1d(x, g, axis=0, mode="constant")
    y = ndimage.correlate1d(y, g, axis=1, mode="constant")
    return y[h:-h, h:-h]


def ssim_map(frame_a, frame_b) -> np.ndarray:
    """SSIM for every valid window; entry (i, j) is centered on pixel (i + 5, j + 5)."""
    a, b = _luma(frame_a), _luma(frame_b)
    if a.shape != b.shape:
        raise MetricError(f"frame shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise MetricError(f"frames must be at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    mu_a, mu_b = _window_mean(a), _window_mean(b)
    var_a = _window_mean(a * a) - mu_a * mu_a
    var_b = _window_mean(b * b) - mu_b * mu_b
    cov = _window_mean(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def _disk(radius: int) -> np.ndarray:
    y, x = np.mgrid[-radius:radius + 1, -radius:radius + 1]
    return x * x + y * y <= radius * radius


def background_mask(*masks, radius: int = DILATION_RADIUS) -> np.ndarray:
    """True on background: complement of the dilated union of the masks' foregrounds."""
    fg = np.zeros(np.shape(masks[0]), dtype=bool)
    for m in masks:
        if m is not None:
            fg |= _check_mask(m) == 0
    if radius > 0 and fg.any():
        fg = ndimage.binary_dilation(fg, structure=_disk(radius))
    return ~fg


def masked_ssim(frame_a, frame_b, mask, *extra_masks) -> float:
    """Mean SSIM over windows centered on background pixels (after dilating the foreground)."""
    smap = ssim_map(frame_a, frame_b)
    if np.shape(mask) != np.shape(frame_a)[:2]:
        raise MetricError("mask does not match frame dimensions")
    bg = background_mask(mask, *extra_masks)
    h = SSIM_WINDOW // 2
    sel = bg[h:-h, h:-h]
    if not sel.any():
        raise MetricError("no background windows to evaluate")
    return float(smap[sel].mean())


def ssim_per_frame(pred_frames, gt_frames, gt_masks, pred_masks=None) -> list[float]:
    _check_videos(pred_frames, gt_frames, "frame")
    if len(gt_masks) != len(gt_frames) or (pred_masks is not None and len(pred_masks) != len(gt_frames)):
        raise MetricError("mask sequence length does not match frames")
    out = []
    for i in range(len(gt_frames)):
        extra = () if pred_masks is None else (pred_masks[i],)
        out.append(masked_ssim(pred_frames[i], gt_frames[i], gt_masks[i], *extra))
    return out


def ssim_bg_video(pred_frames, gt_frames, gt_masks, pred_masks=None) -> float:
    return float(np.mean(ssim_per_frame(pred_frames, gt_frames, gt_masks, pred_masks)))


# --------------------------------------------------------------------------
# Bradley-Terry
# --------------------------------------------------------------------------

def bt_prob(u_i: float, u_j: float) -> float:
    """P(i beats j) = e^u_i / (e^u_i + e^u_j), evaluated stably."""
    d = float(u_i) - float(u_j)
    if d >= 0:
        return 1.0 / (1.0 + math.exp(-d))
    e = math.exp(d)
    return e / (1.0 + e)


@dataclass(frozen=True)
class VoteSet:
    items: tuple
    votes: tuple   # (winner_index, loser_index)

    def __post_init__(self):
        n = len(self.items)
        if len(set(self.items)) != n:
            raise ValueError("item names must be unique")
        for k, (w, l) in enumerate(self.votes):
            if not (0 <= w < n and 0 <= l < n):
                raise ValueError(f"vote {k}: index out of range")
            if w == l:
                raise ValueError(f"vote {k}: winner equals loser")

    @classmethod
    def from_names(cls, pairs: Sequence[tuple[str, str]], items: Optional[Sequence[str]] = None) -> "VoteSet":
        if items is None:
            seen: dict = {}
            for w, l in pairs:
                seen.setdefault(w, None)
                seen.setdefault(l, None)
            items = list(seen)
        index = {name: i for i, name in enumerate(items)}
        return cls(tuple(items), tuple((index[w], index[l]) for w, l in pairs))

    def win_matrix(self) -> np.ndarray:
        W = np.zeros((len(self.items), len(self.items)))
        for w, l in self.votes:
            W[w, l] += 1
        return W


def load_votes(path) -> VoteSet:
    """CSV with header ``winner,loser``; errors name the offending line."""
    pairs = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["winner", "loser"]:
            raise ValueError(f"{path}:1: expected header 'winner,loser'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}:{line}: expected 2 fields, got {len(row)}")
            w, l = row[0].strip(), row[1].strip()
            if not w or not l:
                raise ValueError(f"{path}:{line}: empty item name")
            if w == l:
                raise ValueError(f"{path}:{line}: winner equals loser ({w!r})")
            pairs.append((w, l))
    if not pairs:
        raise ValueError(f"{path}: no votes")
    return VoteSet.from_names(pairs)


def simulate_votes(rng: np.random.Generator, utilities: Sequence[float], n_votes: int,
                   items: Optional[Sequence[str]] = None) -> VoteSet:
    """Votes on uniformly drawn distinct pairs, outcomes from the Bradley-Terry model."""
    u = np.asarray(utilities, dtype=np.float64)
    n = len(u)
    i = rng.integers(n, size=n_votes)
    j = (i + rng.integers(1, n, size=n_votes)) % n
    p = 1.0 / (1.0 + np.exp(u[j] - u[i]))
    i_wins = rng.random(n_votes) < p
    votes = tuple((int(a), int(b)) if w else (int(b), int(a)) for a, b, w in zip(i, j, i_wins))
    return VoteSet(tuple(items) if items is not None else tuple(f"item{k}" for k in range(n)), votes)


def _stationary(rates: np.ndarray) -> np.ndarray:
    """Stationary distribution of the continuous-time chain with off-diagonal ``rates[from, to]``."""
    n = len(rates)
    Q = rates - np.diag(rates.sum(axis=1))
    A = np.vstack([Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi = np.linalg.lstsq(A, b, rcond=None)[0]
    return np.maximum(pi, 1e-300)


def bt_fit_ilsr(votes: VoteSet, alpha: float = 0.01, tol: float = 1e-8, max_iter: int = 10_000) -> np.ndarray:
    """Regularized iterative Luce Spectral Ranking; returns utilities centered to mean 0.

    Each observed "i beats j" adds rate 1/(pi_i + pi_j) from j to i; every
    item pair additionally receives ``alpha`` virtual wins in each direction.
    """
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    n = len(votes.items)
    if n == 0:
        raise ValueError("no items")
    if n == 1:
        return np.zeros(1)
    W = votes.win_matrix()
    if alpha > 0:
        W = W + alpha * (1.0 - np.eye(n))
    else:
        # the chain needs every item reachable from every other
        k, _ = connected_components(csr_matrix(W), directed=True, connection="strong")
        if k > 1:
            raise ValueError("comparison graph is not strongly connected; use alpha > 0")
    u = np.zeros(n)
    for it in range(1, max_iter + 1):
        pi = np.exp(u)
        rates = W.T / (pi[:, None] + pi[None, :])   # rates[j, i] = W[i, j] / (pi_i + pi_j)
        new = np.log(_stationary(rates))
        new -= new.mean()
        if not np.isfinite(new).all():
            raise ConvergenceError(f"ILSR produced non-finite utilities at iteration {it}")
        delta = np.abs(new - u).max()
        u = new
        if delta < tol:
            return u - u.mean()
    raise ConvergenceError(f"ILSR did not converge within {max_iter} iterations")


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def write_report(path, metric: str, per_frame: Sequence, mean: float, **extra) -> None:
    doc = {"metric": metric, "mean": mean, "per_frame": list(per_frame), "frames": len(per_frame)} | extra
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
