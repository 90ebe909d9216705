"""Identity metrics (IDF1, ID switches) and the high-purity rate of tracklets."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import BBox, GTRecord, Tracklet
from .geometry import iou_matrix

PURITY_SHARE = 0.8
SWITCH_BONUS = 0.01

# A labelled box: (frame, identity, box).
Row = tuple[int, int, BBox]


@dataclass
class EvalReport:
    idf1: float
    id_switches: int
    hpr: Optional[float]
    tracklet_count: int
    idtp: int
    idfp: int
    idfn: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    def to_table(self) -> str:
        rows = [
            ("IDF1", f"{100 * self.idf1:.2f}"),
            ("IDs", str(self.id_switches)),
            ("HPR", "-" if self.hpr is None else f"{100 * self.hpr:.2f}"),
            ("#Tracklets", str(self.tracklet_count)),
            ("IDTP", str(self.idtp)),
            ("IDFP", str(self.idfp)),
            ("IDFN", str(self.idfn)),
        ]
        width = max(len(k) for k, _ in rows)
        return "\n".join(f"{k.ljust(width)}  {v.rjust(8)}" for k, v in rows)


def gt_rows(records: Iterable[GTRecord]) -> list[Row]:
    """Evaluated GT boxes; entries flagged 0 are ignored."""
    return [(r.frame, r.identity, r.box) for r in records if r.flag]


def track_rows(tracks: Iterable[Tracklet]) -> list[Row]:
    return [(d.frame, t.id, d.box) for t in tracks for d in t.detections]


def _by_frame(rows: Iterable[Row]) -> dict[int, tuple[list[int], np.ndarray]]:
    grouped: dict[int, list[tuple[int, BBox]]] = defaultdict(list)
    for frame, ident, box in rows:
        grouped[frame].append((ident, box))
    return {
        f: ([i for i, _ in items], np.array([b.as_tuple() for _, b in items]))
        for f, items in grouped.items()
    }


def identity_overlaps(gt: Sequence[Row], pred: Sequence[Row], iou_gate: float = 0.5):
    """Count, per (gt id, pred id), the frames where their boxes overlap by >= iou_gate."""
    gt_ids = sorted({r[1] for r in gt})
    pred_ids = sorted({r[1] for r in pred})
    gi = {g: k for k, g in enumerate(gt_ids)}
    pi = {p: k for k, p in enumerate(pred_ids)}
    counts = np.zeros((len(gt_ids), len(pred_ids)), dtype=np.int64)
    gframes = _by_frame(gt)
    pframes = _by_frame(pred)
    for frame, (gids, gboxes) in gframes.items():
        if frame not in pframes:
            continue
        pids, pboxes = pframes[frame]
        hit = iou_matrix(gboxes, pboxes) >= iou_gate
        for a, b in zip(*np.nonzero(hit)):
            counts[gi[gids[a]], pi[pids[b]]] += 1
    gcount = Counter(r[1] for r in gt)
    pcount = Counter(r[1] for r in pred)
    gt_len = np.array([gcount[g] for g in gt_ids], dtype=np.int64)
    pred_len = np.array([pcount[p] for p in pred_ids], dtype=np.int64)
    return gt_ids, pred_ids, counts, gt_len, pred_len


def idf1(gt: Sequence[Row], pred: Sequence[Row], iou_gate: float = 0.5):
    """Return (idf1, idtp, idfp, idfn) under the optimal identity bijection."""
    n_gt, n_pred = len(gt), len(pred)
    if n_gt == 0 and n_pred == 0:
        return 1.0, 0, 0, 0
    idtp = 0
    if n_gt and n_pred:
        _, _, counts, _, _ = identity_overlaps(gt, pred, iou_gate)
        rows, cols = linear_sum_assignment(counts, maximize=True)
        idtp = int(counts[rows, cols].sum())
    idfp = n_pred - idtp
    idfn = n_gt - idtp
    return 2 * idtp / (2 * idtp + idfp + idfn), idtp, idfp, idfn


def id_switches(gt: Sequence[Row], pred: Sequence[Row], iou_gate: float = 0.5) -> int:
    """Frame-sequential matching; counts changes of a GT identity's matched prediction."""
    gframes = _by_frame(gt)
    pframes = _by_frame(pred)
    last: dict[int, int] = {}
    switches = 0
    for frame in sorted(gframes):
        if frame not in pframes:
            continue
        gids, gboxes = gframes[frame]
        pids, pboxes = pframes[frame]
        overlap = iou_matrix(gboxes, pboxes)
        cost = 1.0 - overlap
        for a, g in enumerate(gids):
            if g in last:
                for b, p in enumerate(pids):
                    if p == last[g]:
                        cost[a, b] -= SWITCH_BONUS
        gated = overlap >= iou_gate
        cost = np.where(gated, cost, 1e6)
        for a, b in zip(*linear_sum_assignment(cost)):
            if not gated[a, b]:
                continue
            g, p = gids[a], pids[b]
            if g in last and last[g] != p:
                switches += 1
            last[g] = p
    return switches


def attribute_detections(tracks: Sequence[Tracklet], gt: Sequence[GTRecord], iou_gate: float = 0.5):
    """Per tracklet, the GT identity of each detection (None = background).

    Attribution is an optimal per-frame assignment between all tracklet boxes
    and GT boxes of that frame, gated at ``iou_gate``.
    """
    gframes = _by_frame(gt_rows(gt))
    located: dict[int, list[tuple[int, int, BBox]]] = defaultdict(list)
    for ti, t in enumerate(tracks):
        for di, d in enumerate(t.detections):
            located[d.frame].append((ti, di, d.box))
    out: list[list[Optional[int]]] = [[None] * len(t) for t in tracks]
    for frame, items in located.items():
        if frame not in gframes:
            continue
        gids, gboxes = gframes[frame]
        overlap = iou_matrix(np.array([b.as_tuple() for _, _, b in items]), gboxes)
        overlap[overlap < iou_gate] = 0.0
        rows, cols = linear_sum_assignment(overlap, maximize=True)
        for r, c in zip(rows, cols):
            if overlap[r, c] > 0.0:
                ti, di, _ = items[r]
                out[ti][di] = gids[c]
    return out


def majority_identity(attributions: Sequence[Optional[int]]) -> tuple[Optional[int], int]:
    """Modal attributed identity and its count; ties go to the smaller identity.

    Background wins only when it is strictly the most common label.
    """
    counts = Counter(attributions)
    best = max(counts.items(), key=lambda kv: (kv[1], kv[0] is not None, -(kv[0] or 0)))
    return best[0], best[1]


def is_high_purity(attributions: Sequence[Optional[int]]) -> bool:
    ident, count = majority_identity(attributions)
    return ident is not None and count / len(attributions) > PURITY_SHARE


def hpr(tracks: Sequence[Tracklet], gt: Sequence[GTRecord], iou_gate: float = 0.5):
    """Return (high-purity rate, per-tracklet purity share of the modal identity)."""
    if not tracks:
        raise ValueError("high purity rate needs at least one tracklet")
    attributed = attribute_detections(tracks, gt, iou_gate)
    purities = []
    high = 0
    for attr in attributed:
        ident, count = majority_identity(attr)
        purities.append(0.0 if ident is None else count / len(attr))
        high += is_high_purity(attr)
    return high / len(tracks), purities


def evaluate(
    gt: Sequence[GTRecord],
    tracks: Sequence[Tracklet],
    iou_gate: float = 0.5,
    with_hpr: bool = True,
) -> EvalReport:
    g = gt_rows(gt)
    p = track_rows(tracks)
    score, idtp, idfp, idfn = idf1(g, p, iou_gate)
    return EvalReport(
        idf1=score,
        id_switches=id_switches(g, p, iou_gate),
        hpr=hpr(tracks, gt, iou_gate)[0] if with_hpr and tracks else None,
        tracklet_count=len(tracks),
        idtp=idtp,
        idfp=idfp,
        idfn=idfn,
    )
