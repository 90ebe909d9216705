"""Training samples from clip windows (video level) and threshold variants (tracklet level)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from ..core import GTRecord, SequenceBundle, Tracklet

MIN_CLIP_FRAMES = 10


@dataclass(frozen=True)
class AugmentConfig:
    video_level: bool = True
    tracklet_level: bool = True
    stride: int = 50
    jitter: int = 15
    min_fraction: float = 0.25
    max_fraction: float = 1.0
    thresholds: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)

    def __post_init__(self):
        if not 0 < self.min_fraction <= self.max_fraction <= 1:
            raise ValueError(
                f"need 0 < min_fraction <= max_fraction <= 1, got "
                f"{self.min_fraction}, {self.max_fraction}"
            )
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        object.__setattr__(self, "thresholds", tuple(self.thresholds))


@dataclass
class TrainingSample:
    name: str
    fps: float
    window: tuple[int, int]
    th_c: float
    tracklets: list[Tracklet]
    ground_truth: list[GTRecord] = field(default_factory=list)

    def to_bundle(self) -> SequenceBundle:
        """The sample's detections as a bundle spanning frames 1..window end."""
        end = self.window[1]
        frames: list[list] = [[] for _ in range(end)]
        for t in self.tracklets:
            for d in t.detections:
                frames[d.frame - 1].append(d)
        for f in frames:
            f.sort(key=lambda d: d.det_index)
        return SequenceBundle(self.name, self.fps, end, frames, self.ground_truth)


def clip_windows(frame_count: int, cfg: AugmentConfig, rng: np.random.Generator) -> list[tuple[int, int]]:
    """Inclusive [start, end] windows, one per anchor, shifted to stay inside the sequence."""
    windows = []
    for anchor in range(1, frame_count + 1, cfg.stride):
        start = anchor + int(rng.integers(-cfg.jitter, cfg.jitter + 1)) if cfg.jitter else anchor
        fraction = rng.uniform(cfg.min_fraction, cfg.max_fraction)
        length = max(1, min(frame_count, int(round(fraction * frame_count))))
        start = min(max(start, 1), frame_count - length + 1)
        end = start + length - 1
        if length >= MIN_CLIP_FRAMES:
            windows.append((start, end))
    return windows


def crop_tracklets(tracklets: Sequence[Tracklet], start: int, end: int) -> list[Tracklet]:
    """Restrict tracklets to [start, end]; surviving pieces keep their source id."""
    out = []
    for t in tracklets:
        dets = [d for d in t.detections if start <= d.frame <= end]
        if dets:
            out.append(Tracklet(t.id, dets))
    return out


def augment(
    bundle: SequenceBundle,
    tracklets_by_threshold: Mapping[float, Sequence[Tracklet]],
    cfg: AugmentConfig,
    seed: int,
    base_threshold: Optional[float] = None,
) -> list[TrainingSample]:
    """Cross product of clip windows and per-threshold tracklet sets.

    Without video-level augmentation the only window is the whole sequence;
    without tracklet-level augmentation only ``base_threshold`` (default: the
    first configured threshold present) is used.
    """
    rng = np.random.default_rng(seed)
    if cfg.video_level:
        windows = clip_windows(bundle.frame_count, cfg, rng)
    else:
        windows = [(1, bundle.frame_count)]
    if cfg.tracklet_level:
        thresholds = [th for th in cfg.thresholds if th in tracklets_by_threshold]
    else:
        if base_threshold is None:
            base_threshold = next(th for th in cfg.thresholds if th in tracklets_by_threshold)
        thresholds = [base_threshold]
    gt = list(bundle.ground_truth or ())
    samples = []
    for start, end in windows:
        clip_gt = [r for r in gt if start <= r.frame <= end]
        for th in thresholds:
            pieces = crop_tracklets(tracklets_by_threshold[th], start, end)
            if pieces:
                samples.append(
                    TrainingSample(
                        f"{bundle.name}[{start}:{end}]@{th:g}", bundle.fps, (start, end), th,
                        pieces, clip_gt,
                    )
                )
    return samples
