"""Box overlap measures and pairwise geometric edge features."""

from __future__ import annotations

import math

import numpy as np

from .core import BBox


def _intersection(a: BBox, b: BBox) -> float:
    iw = min(a.x + a.w, b.x + b.w) - max(a.x, b.x)
    ih = min(a.y + a.h, b.y + b.h) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def iou(a: BBox, b: BBox) -> float:
    inter = _intersection(a, b)
    # Corner arithmetic can overshoot by an ulp; keep the ratio in range.
    return min(inter / (a.area + b.area - inter), 1.0)


def giou(a: BBox, b: BBox) -> float:
    inter = _intersection(a, b)
    union = a.area + b.area - inter
    cw = max(a.x + a.w, b.x + b.w) - min(a.x, b.x)
    ch = max(a.y + a.h, b.y + b.h) - min(a.y, b.y)
    enclosing = cw * ch
    return min(max(inter / union - (enclosing - union) / enclosing, -1.0), 1.0)


def iou_matrix(boxes_a, boxes_b) -> np.ndarray:
    """Pairwise IoU for (N, 4) and (M, 4) arrays in x, y, w, h layout."""
    a = np.asarray(boxes_a, dtype=np.float64).reshape(-1, 4)
    b = np.asarray(boxes_b, dtype=np.float64).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ax2, ay2 = a[:, 0] + a[:, 2], a[:, 1] + a[:, 3]
    bx2, by2 = b[:, 0] + b[:, 2], b[:, 1] + b[:, 3]
    iw = np.minimum(ax2[:, None], bx2[None]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(ay2[:, None], by2[None]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = a[:, 2] * a[:, 3]
    area_b = b[:, 2] * b[:, 3]
    return np.minimum(inter / (area_a[:, None] + area_b[None] - inter), 1.0)


def relative_geometry(i: BBox, j: BBox) -> np.ndarray:
    """Center offset normalised by mean height, plus log scale ratios, from i to j."""
    hsum = j.h + i.h
    return np.array(
        [
            2.0 * (j.cx - i.cx) / hsum,
            2.0 * (j.cy - i.cy) / hsum,
            math.log(j.h / i.h),
            math.log(j.w / i.w),
        ]
    )


def time_difference(t_last_a: int, t_first_b: int, fps: float) -> float:
    if t_first_b <= t_last_a:
        raise ValueError(
            f"time gap must be positive: later tracklet starts at {t_first_b}, "
            f"earlier ends at {t_last_a}"
        )
    if fps <= 0:
        raise ValueError(f"fps must be positive, got {fps}")
    return (t_first_b - t_last_a) / fps
