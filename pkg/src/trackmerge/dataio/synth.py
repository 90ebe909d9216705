"""Seeded synthetic sequences: noisy constant-velocity walkers with ReID-like embeddings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core import BBox, Detection, GTRecord, SequenceBundle, Tracklet


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    num_identities: int = 12
    frame_count: int = 400
    fps: float = 25.0
    width: float = 640.0
    height: float = 480.0
    speed_range: tuple[float, float] = (0.5, 3.0)  # px / frame
    accel_std: float = 0.05
    height_range: tuple[float, float] = (80.0, 160.0)
    aspect: float = 0.4  # w / h
    det_noise_std: float = 1.0  # px
    miss_prob: float = 0.1
    occlusion_events: int = 4
    occlusion_duration: tuple[int, int] = (10, 40)
    occlusion_overlap: Optional[float] = 0.6  # hide a box this much covered by a nearer one; None = off
    fp_rate: float = 0.5  # expected false positives per frame
    app_dim: int = 16
    embedding_noise: float = 0.1
    true_confidence: tuple[float, float] = (0.5, 1.0)
    false_confidence: tuple[float, float] = (0.1, 0.6)
    name: str = ""

    def __post_init__(self):
        for key in ("miss_prob",):
            v = getattr(self, key)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{key} must lie in [0, 1], got {v}")
        for key in ("num_identities", "frame_count", "occlusion_events", "app_dim"):
            if getattr(self, key) < 0:
                raise ValueError(f"{key} must be >= 0")
        if self.fp_rate < 0:
            raise ValueError("fp_rate must be >= 0")
        for key in ("speed_range", "height_range", "occlusion_duration",
                    "true_confidence", "false_confidence"):
            lo, hi = getattr(self, key)
            if lo > hi:
                raise ValueError(f"{key} must be (low, high), got {(lo, hi)}")
            object.__setattr__(self, key, (lo, hi))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _coverage(boxes: list[BBox]) -> np.ndarray:
    """Largest share of each box covered by a single nearer box (lower bottom edge = nearer)."""
    out = np.zeros(len(boxes))
    for k, a in enumerate(boxes):
        for b in boxes:
            if b is a or b.y + b.h <= a.y + a.h:
                continue
            iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
            ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
            if iw > 0 and ih > 0:
                out[k] = max(out[k], iw * ih / a.area)
    return out


def _r(x: float, digits: int = 2) -> float:
    return float(round(x, digits))


def generate(cfg: SynthConfig) -> SequenceBundle:
    """Simulate one sequence; identical configs give identical bundles."""
    rng = np.random.default_rng(cfg.seed)
    n, T = cfg.num_identities, cfg.frame_count

    heights = rng.uniform(*cfg.height_range, size=n)
    widths = cfg.aspect * heights
    cx = rng.uniform(widths / 2, cfg.width - widths / 2)
    cy = rng.uniform(heights / 2, cfg.height - heights / 2)
    angle = rng.uniform(0, 2 * np.pi, size=n)
    speed = rng.uniform(*cfg.speed_range, size=n)
    vel = np.stack([speed * np.cos(angle), speed * np.sin(angle)], axis=1)
    identity_vec = _unit(rng.normal(size=(n, cfg.app_dim)))

    occluded = np.zeros((T + 1, n), dtype=bool)
    for _ in range(cfg.occlusion_events if n else 0):
        who = rng.integers(n)
        length = int(rng.integers(cfg.occlusion_duration[0], cfg.occlusion_duration[1] + 1))
        start = int(rng.integers(1, max(T - length, 1) + 1))
        occluded[start : start + length, who] = True

    gt: list[GTRecord] = []
    frames: list[list[Detection]] = []
    pos = np.stack([cx, cy], axis=1)
    vmax = cfg.speed_range[1]
    lo = np.stack([widths / 2, heights / 2], axis=1)
    hi = np.stack([cfg.width - widths / 2, cfg.height - heights / 2], axis=1)
    for frame in range(1, T + 1):
        if frame > 1:
            vel = vel + rng.normal(0.0, cfg.accel_std, size=vel.shape)
            speed = np.linalg.norm(vel, axis=1, keepdims=True)
            vel = np.where(speed > vmax, vel * vmax / np.maximum(speed, 1e-12), vel)
            pos = pos + vel
            # Reflect at the image borders.
            below, above = pos < lo, pos > hi
            pos = np.where(below, 2 * lo - pos, pos)
            pos = np.where(above, 2 * hi - pos, pos)
            vel = np.where(below | above, -vel, vel)

        boxes = [
            BBox(
                _r(pos[k, 0] - widths[k] / 2), _r(pos[k, 1] - heights[k] / 2),
                _r(widths[k]), _r(heights[k]),
            )
            for k in range(n)
        ]
        covered = _coverage(boxes)
        dets: list[tuple[BBox, float, np.ndarray]] = []
        for k in range(n):
            box = boxes[k]
            hidden = occluded[frame, k] or (
                cfg.occlusion_overlap is not None and covered[k] >= cfg.occlusion_overlap
            )
            if not hidden:
                gt.append(GTRecord(frame, k + 1, box, _r(1.0 - covered[k])))
            # Draw every random number unconditionally so streams stay aligned.
            miss = rng.random() < cfg.miss_prob
            noise = rng.normal(0.0, cfg.det_noise_std, size=4)
            conf = rng.uniform(*cfg.true_confidence)
            emb_noise = rng.normal(0.0, cfg.embedding_noise, size=cfg.app_dim)
            if miss or hidden:
                continue
            w = max(box.w + noise[2], 1.0)
            h = max(box.h + noise[3], 1.0)
            noisy = BBox(_r(box.cx + noise[0] - w / 2), _r(box.cy + noise[1] - h / 2), _r(w), _r(h))
            emb = np.round(_unit(identity_vec[k] + emb_noise), 6)
            dets.append((noisy, _r(conf, 3), emb))

        for _ in range(rng.poisson(cfg.fp_rate)):
            h = rng.uniform(*cfg.height_range)
            w = cfg.aspect * h
            x = rng.uniform(0, cfg.width - w)
            y = rng.uniform(0, cfg.height - h)
            conf = rng.uniform(*cfg.false_confidence)
            emb = np.round(_unit(rng.normal(size=cfg.app_dim)), 6)
            dets.append((BBox(_r(x), _r(y), _r(w), _r(h)), _r(conf, 3), emb))

        order = rng.permutation(len(dets))
        frames.append(
            [Detection(frame, dets[o][0], dets[o][1], dets[o][2], idx) for idx, o in enumerate(order)]
        )

    return SequenceBundle(
        cfg.name or f"synth-{cfg.seed:04d}", cfg.fps, T, frames, gt, cfg.width, cfg.height
    )


def fragment_identities(
    bundle: SequenceBundle,
    seed: int = 0,
    length_range: tuple[int, int] = (5, 40),
    iou_gate: float = 0.5,
) -> list[Tracklet]:
    """Pure tracklets cut from the true identities, for testing the merge stage.

    Detections are attributed to ground truth per frame; each identity's run
    is then split into contiguous pieces with lengths drawn from
    ``length_range``. Background detections are dropped.
    """
    from ..metrics import attribute_detections  # local: metrics is above dataio

    lo, hi = length_range
    if not 1 <= lo <= hi:
        raise ValueError(f"length_range must be (low, high) with 1 <= low <= high, got {length_range}")
    singles = [Tracklet(k, [d]) for k, d in enumerate(bundle.all_detections())]
    owners = attribute_detections(singles, bundle.ground_truth, iou_gate)
    by_identity: dict[int, list[Detection]] = {}
    for t, (owner,) in zip(singles, owners):
        if owner is not None:
            by_identity.setdefault(owner, []).append(t.detections[0])
    rng = np.random.default_rng(seed)
    pieces = []
    for ident in sorted(by_identity):
        dets = sorted(by_identity[ident], key=lambda d: d.frame)
        k = 0
        while k < len(dets):
            n = int(rng.integers(lo, hi + 1))
            pieces.append(dets[k:k + n])
            k += n
    pieces.sort(key=lambda p: (p[0].frame, p[0].det_index))
    return [Tracklet(i, p) for i, p in enumerate(pieces)]
