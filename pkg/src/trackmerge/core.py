"""Domain types shared across the tracker.

All types are frozen; a Tracklet validates its own frame ordering on
construction and never sorts silently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


class TrackletError(ValueError):
    pass


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box, top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite box {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box needs positive size, got w={self.w} h={self.h}")

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2, cy - h / 2, w, h)

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True, eq=False)
class Detection:
    frame: int
    box: BBox
    confidence: float = 1.0
    embedding: Optional[np.ndarray] = None
    det_index: int = -1

    def __post_init__(self):
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=np.float64)
            emb.setflags(write=False)
            object.__setattr__(self, "embedding", emb)

    def with_embedding(self, embedding: Optional[np.ndarray]) -> "Detection":
        return Detection(self.frame, self.box, self.confidence, embedding, self.det_index)


@dataclass(frozen=True)
class Tracklet:
    """Temporally ordered run of detections sharing one identity hypothesis."""

    id: int
    detections: tuple[Detection, ...]

    def __post_init__(self):
        dets = tuple(self.detections)
        object.__setattr__(self, "detections", dets)
        if not dets:
            raise TrackletError(f"tracklet {self.id} is empty")
        for prev, cur in zip(dets, dets[1:]):
            if cur.frame <= prev.frame:
                raise TrackletError(
                    f"tracklet {self.id}: frame {cur.frame} follows frame {prev.frame}"
                )

    def start(self) -> int:
        return self.detections[0].frame

    def end(self) -> int:
        return self.detections[-1].frame

    def __len__(self) -> int:
        return len(self.detections)

    @property
    def frames(self) -> list[int]:
        return [d.frame for d in self.detections]

    def has_embeddings(self) -> bool:
        return all(d.embedding is not None for d in self.detections)

    def renumbered(self, new_id: int) -> "Tracklet":
        return Tracklet(new_id, self.detections)


# Trajectories share the Tracklet contract; the name marks final output.
Trajectory = Tracklet


@dataclass(frozen=True)
class GTRecord:
    frame: int
    identity: int
    box: BBox
    visibility: float = 1.0
    flag: int = 1  # 0 = ignore during evaluation
    cls: int = 1


@dataclass(frozen=True)
class SequenceBundle:
    name: str
    fps: float
    frame_count: int
    detections: tuple[tuple[Detection, ...], ...]
    ground_truth: Optional[tuple[GTRecord, ...]] = None
    width: Optional[float] = None
    height: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, "detections", tuple(tuple(f) for f in self.detections))
        if self.ground_truth is not None:
            object.__setattr__(self, "ground_truth", tuple(self.ground_truth))

    def all_detections(self) -> list[Detection]:
        return [d for frame in self.detections for d in frame]

    def frame_detections(self, frame: int) -> Sequence[Detection]:
        """Detections of a 1-based frame."""
        return self.detections[frame - 1] if 1 <= frame <= len(self.detections) else ()

    @property
    def embedding_dim(self) -> Optional[int]:
        for d in self.all_detections():
            if d.embedding is not None:
                return int(d.embedding.shape[0])
        return None


def validate_bundle(bundle: SequenceBundle) -> list[str]:
    """Return one human-readable message per violated invariant."""
    problems: list[str] = []
    if not bundle.fps > 0:
        problems.append(f"fps must be positive, got {bundle.fps}")
    if len(bundle.detections) > bundle.frame_count:
        problems.append(
            f"{len(bundle.detections)} detection frames exceed frame_count {bundle.frame_count}"
        )
    dim = None
    dim_reported = False
    for dets in bundle.detections:
        for d in dets:
            label = f"detection (frame {d.frame}, index {d.det_index})"
            if not 1 <= d.frame <= bundle.frame_count:
                problems.append(f"{label}: frame outside [1, {bundle.frame_count}]")
            if not 0.0 <= d.confidence <= 1.0:
                problems.append(f"{label}: confidence {d.confidence} outside [0, 1]")
            if d.embedding is not None:
                if d.embedding.ndim != 1 or not np.all(np.isfinite(d.embedding)):
                    problems.append(f"{label}: embedding must be a finite vector")
                elif dim is None:
                    dim = d.embedding.shape[0]
                elif d.embedding.shape[0] != dim and not dim_reported:
                    problems.append(
                        f"{label}: D_app mismatch, embedding dimension "
                        f"{d.embedding.shape[0]} vs {dim}"
                    )
                    dim_reported = True
    for rec in bundle.ground_truth or ():
        if not 1 <= rec.frame <= bundle.frame_count:
            problems.append(
                f"ground truth (frame {rec.frame}, id {rec.identity}): frame outside "
                f"[1, {bundle.frame_count}]"
            )
    return problems
