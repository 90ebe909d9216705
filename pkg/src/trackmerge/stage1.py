"""First-stage association: thresholded linear assignment producing pure tracklets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import Detection, SequenceBundle, Tracklet
from .geometry import iou_matrix
from .motion import KalmanState, MotionNoise, kf_init, kf_predict, kf_update

FORBIDDEN = np.inf

COST_MODES = ("iou", "fused_min", "fused_weighted")


@dataclass(frozen=True)
class Stage1Config:
    th_c: float = 0.2
    max_age: int = 30
    min_confidence: float = 0.1
    cost_mode: str = "iou"
    fuse_weight: float = 0.5
    byte_two_round: bool = True
    high_confidence: float = 0.6
    noise: MotionNoise = field(default_factory=MotionNoise)

    def __post_init__(self):
        if not 0 < self.th_c <= 1:
            raise ValueError(f"th_c must lie in (0, 1], got {self.th_c}")
        if self.cost_mode not in COST_MODES:
            raise ValueError(f"cost_mode must be one of {COST_MODES}, got {self.cost_mode!r}")
        if not 0 <= self.fuse_weight <= 1:
            raise ValueError(f"fuse_weight must lie in [0, 1], got {self.fuse_weight}")


@dataclass
class Matching:
    matches: list[tuple[int, int]]
    unmatched_rows: list[int]
    unmatched_cols: list[int]


def _embedding_matrix(vectors: list, what: str) -> np.ndarray:
    if any(v is None for v in vectors):
        raise ValueError(f"fused cost needs embeddings on every {what}")
    m = np.asarray(vectors, dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.where(norms > 0, norms, 1.0)


def build_cost_matrix(
    tracks: list[tuple[Tracklet, KalmanState]],
    dets: list[Detection],
    cfg: Stage1Config,
    mode: str | None = None,
) -> np.ndarray:
    """Costs in [0, 1]; entries above ``th_c`` become ``FORBIDDEN`` (+inf)."""
    return _cost_matrix(
        [state.box().as_tuple() for _, state in tracks],
        [t.detections[-1].embedding for t, _ in tracks],
        dets,
        cfg,
        mode or cfg.cost_mode,
    )


def _cost_matrix(pred_boxes, track_embeddings, dets, cfg, mode) -> np.ndarray:
    if not len(pred_boxes) or not dets:
        return np.zeros((len(pred_boxes), len(dets)))
    boxes = np.array([d.box.as_tuple() for d in dets])
    iou_cost = 1.0 - iou_matrix(np.array(pred_boxes), boxes)
    if mode == "iou":
        cost = iou_cost
    else:
        # Track appearance = embedding of its latest detection.
        ta = _embedding_matrix(track_embeddings, "track")
        da = _embedding_matrix([d.embedding for d in dets], "detection")
        app_cost = np.clip((1.0 - ta @ da.T) / 2.0, 0.0, 1.0)
        if mode == "fused_min":
            cost = np.minimum(iou_cost, app_cost)
        else:
            cost = cfg.fuse_weight * iou_cost + (1.0 - cfg.fuse_weight) * app_cost
    cost = np.clip(cost, 0.0, 1.0)
    cost[cost > cfg.th_c] = FORBIDDEN
    return cost


def _best_matching(costs: np.ndarray, rows: list[int], cols: list[int]) -> list[tuple[int, int]]:
    """Maximum-cardinality, minimum-cost matching restricted to ``rows`` x ``cols``."""
    if not rows or not cols:
        return []
    sub = costs[np.ix_(rows, cols)]
    allowed = np.isfinite(sub)
    if not allowed.any():
        return []
    # Any forbidden pair costs more than every allowed assignment combined.
    spread = float(np.max(np.abs(sub[allowed])))
    big = 2.0 * min(sub.shape) * (spread + 1.0) + 1.0
    r_idx, c_idx = linear_sum_assignment(np.where(allowed, sub, big))
    return [(rows[r], cols[c]) for r, c in zip(r_idx, c_idx) if allowed[r, c]]


def _value(costs: np.ndarray, matches) -> tuple[int, float]:
    # fsum is exact, so equal real totals compare equal whatever the order.
    return len(matches), math.fsum(costs[r, c] for r, c in matches)


def solve_assignment(costs: np.ndarray) -> Matching:
    """Optimal one-to-one matching over the allowed (finite) entries.

    Maximises the number of matches first, then minimises their total cost.
    Among equal optima the lowest row takes the lowest column, then the next
    row, and so on.
    """
    costs = np.asarray(costs, dtype=np.float64)
    n_rows, n_cols = costs.shape if costs.ndim == 2 else (0, 0)
    best = _best_matching(costs, list(range(n_rows)), list(range(n_cols)))
    target = _value(costs, best)
    fixed: list[tuple[int, int]] = []
    used_cols: set[int] = set()
    for r in range(n_rows):
        current = dict(best).get(r)
        rest = list(range(r + 1, n_rows))
        for c in range(n_cols if current is None else current):
            if c in used_cols or not np.isfinite(costs[r, c]):
                continue
            free = [k for k in range(n_cols) if k not in used_cols and k != c]
            trial = fixed + [(r, c)] + _best_matching(costs, rest, free)
            if _value(costs, trial) == target:
                best = trial
                current = c
                break
        if current is not None:
            fixed.append((r, current))
            used_cols.add(current)
    matches = sorted((int(r), int(c)) for r, c in best)
    mr = {r for r, _ in matches}
    mc = {c for _, c in matches}
    return Matching(
        matches,
        [r for r in range(n_rows) if r not in mr],
        [c for c in range(n_cols) if c not in mc],
    )


@dataclass
class _Track:
    detections: list[Detection]
    state: KalmanState
    lost: int = 0
    order: int = 0


def track_sequence(bundle: SequenceBundle, cfg: Stage1Config) -> list[Tracklet]:
    """Offline frame-by-frame tracking; returns every tracklet with ids 0..N-1."""
    noise = cfg.noise
    active: list[_Track] = []
    finished: list[_Track] = []
    born = 0

    for frame in range(1, bundle.frame_count + 1):
        for t in active:
            t.state = kf_predict(t.state, 1, noise)
            t.lost += 1

        dets = [d for d in bundle.frame_detections(frame) if d.confidence >= cfg.min_confidence]
        if cfg.byte_two_round:
            high = [d for d in dets if d.confidence >= cfg.high_confidence]
            low = [d for d in dets if d.confidence < cfg.high_confidence]
        else:
            high, low = dets, []

        pending = list(active)
        unmatched_high = _associate(pending, high, cfg, cfg.cost_mode, noise)
        remaining = [t for t in pending if t.lost > 0]
        unmatched_low = _associate(remaining, low, cfg, "iou", noise) if low else []

        # Two-round mode follows ByteTrack: low-confidence leftovers never start tracks.
        births = unmatched_high if cfg.byte_two_round else unmatched_high + unmatched_low
        for det in births:
            active.append(_Track([det], kf_init(det.box, noise), 0, born))
            born += 1

        still = []
        for t in active:
            (finished if t.lost > cfg.max_age else still).append(t)
        active = still

    everything = sorted(finished + active, key=lambda t: t.order)
    return [Tracklet(i, t.detections) for i, t in enumerate(everything)]


def _associate(tracks: list[_Track], dets: list[Detection], cfg, mode, noise) -> list[Detection]:
    """Match in place; returns the detections left unmatched."""
    if not dets:
        return []
    if not tracks:
        return list(dets)
    costs = _cost_matrix(
        [t.state.box().as_tuple() for t in tracks],
        [t.detections[-1].embedding for t in tracks],
        dets,
        cfg,
        mode,
    )
    result = solve_assignment(costs)
    for r, c in result.matches:
        t = tracks[r]
        t.detections.append(dets[c])
        t.state = kf_update(t.state, dets[c].box, noise)
        t.lost = 0
    return [dets[c] for c in result.unmatched_cols]
