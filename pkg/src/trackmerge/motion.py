"""Constant-velocity Kalman filter over (cx, cy, w, h) and their velocities."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BBox, Tracklet
from .geometry import giou

_NDIM = 4
_MIN_SIZE = 1e-3


@dataclass(frozen=True)
class MotionNoise:
    """Noise scales, as multiples of the current box height.

    ``init_*`` scale the initial covariance; setting ``std_position`` and
    ``std_velocity`` to zero gives an exact filter on noiseless data.
    """

    std_position: float = 1.0 / 20
    std_velocity: float = 1.0 / 160
    init_position: float = 2.0
    init_velocity: float = 10.0


DEFAULT_NOISE = MotionNoise()
NOISELESS = MotionNoise(std_position=0.0, std_velocity=0.0, init_position=1.0, init_velocity=1.0)


@dataclass(frozen=True, eq=False)
class KalmanState:
    mean: np.ndarray
    covariance: np.ndarray

    def box(self) -> BBox:
        cx, cy, w, h = self.mean[:4]
        w = max(w, _MIN_SIZE)
        h = max(h, _MIN_SIZE)
        return BBox.from_center(cx, cy, w, h)


def _transition(steps: int) -> np.ndarray:
    F = np.eye(2 * _NDIM)
    F[:_NDIM, _NDIM:] = steps * np.eye(_NDIM)
    return F


_H = np.eye(_NDIM, 2 * _NDIM)


def _symmetric(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def kf_init(box: BBox, noise: MotionNoise = DEFAULT_NOISE) -> KalmanState:
    mean = np.array([box.cx, box.cy, box.w, box.h, 0.0, 0.0, 0.0, 0.0])
    if noise.std_position == 0 and noise.std_velocity == 0:
        # Unit prior: with zero measurement noise the first update pins the box.
        std = np.r_[np.full(_NDIM, noise.init_position), np.full(_NDIM, noise.init_velocity)]
    else:
        std = np.r_[
            np.full(_NDIM, noise.init_position * noise.std_position * box.h),
            np.full(_NDIM, noise.init_velocity * noise.std_velocity * box.h),
        ]
    return KalmanState(mean, np.diag(std**2))


def kf_predict(state: KalmanState, steps: int = 1, noise: MotionNoise = DEFAULT_NOISE) -> KalmanState:
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    F1 = _transition(1)
    mean = state.mean.copy()
    cov = state.covariance.copy()
    for _ in range(steps):
        h = max(mean[3], _MIN_SIZE)
        q = np.r_[
            np.full(_NDIM, (noise.std_position * h) ** 2),
            np.full(_NDIM, (noise.std_velocity * h) ** 2),
        ]
        mean = F1 @ mean
        cov = _symmetric(F1 @ cov @ F1.T + np.diag(q))
        for k in (2, 3):
            if mean[k] <= _MIN_SIZE:
                mean[k] = _MIN_SIZE
                mean[k + _NDIM] = 0.0
    return KalmanState(mean, cov)


def kf_update(state: KalmanState, measurement: BBox, noise: MotionNoise = DEFAULT_NOISE) -> KalmanState:
    z = np.array([measurement.cx, measurement.cy, measurement.w, measurement.h])
    R = np.diag(np.full(_NDIM, (noise.std_position * max(state.mean[3], _MIN_SIZE)) ** 2))
    P = state.covariance
    S = _H @ P @ _H.T + R
    # pinv keeps the exact (zero-noise) filter well defined once P collapses.
    K = P @ _H.T @ np.linalg.pinv(S)
    mean = state.mean + K @ (z - _H @ state.mean)
    A = np.eye(2 * _NDIM) - K @ _H
    cov = _symmetric(A @ P @ A.T + K @ R @ K.T)
    for k in (2, 3):
        mean[k] = max(mean[k], _MIN_SIZE)
    return KalmanState(mean, cov)


def fit_boxes(frames: list[int], boxes: list[BBox], noise: MotionNoise = DEFAULT_NOISE) -> KalmanState:
    """Run the filter through timestamped boxes; frames must be strictly monotone."""
    state = kf_init(boxes[0], noise)
    for prev, cur, box in zip(frames, frames[1:], boxes[1:]):
        state = kf_predict(state, abs(cur - prev), noise)
        state = kf_update(state, box, noise)
    return state


def midframe(end_a: int, start_b: int) -> int:
    """Nearest frame to the gap midpoint, ties toward the earlier tracklet."""
    return end_a + (start_b - end_a) // 2


def extrapolate_box(state: KalmanState, steps: int) -> BBox:
    """Mean of ``kf_predict(state, steps)`` as a box, without the covariance work."""
    mean = state.mean[:_NDIM] + steps * state.mean[_NDIM:]
    if steps > 0:
        mean[2:] = np.maximum(mean[2:], _MIN_SIZE)
    return BBox.from_center(*mean)


def fit_forward(t: Tracklet, noise: MotionNoise = DEFAULT_NOISE) -> KalmanState:
    return fit_boxes(t.frames, [d.box for d in t.detections], noise)


def fit_backward(t: Tracklet, noise: MotionNoise = DEFAULT_NOISE) -> KalmanState:
    """Filter over the time-reversed detections; velocities come out negated."""
    rev = t.detections[::-1]
    return fit_boxes([d.frame for d in rev], [d.box for d in rev], noise)


def midframe_boxes(
    forward: KalmanState, end_a: int, backward: KalmanState, start_b: int
) -> tuple[BBox, BBox]:
    t_mid = midframe(end_a, start_b)
    return extrapolate_box(forward, t_mid - end_a), extrapolate_box(backward, start_b - t_mid)


def predict_to_midframe(
    t_a: Tracklet, t_b: Tracklet, noise: MotionNoise = DEFAULT_NOISE
) -> tuple[BBox, BBox, float]:
    """Extrapolate t_a forward and t_b backward to the gap midpoint; score with GIoU."""
    if t_a.end() >= t_b.start():
        raise ValueError(
            f"tracklets overlap in time: {t_a.id} ends {t_a.end()}, {t_b.id} starts {t_b.start()}"
        )
    box_a, box_b = midframe_boxes(
        fit_forward(t_a, noise), t_a.end(), fit_backward(t_b, noise), t_b.start()
    )
    return box_a, box_b, giou(box_a, box_b)
