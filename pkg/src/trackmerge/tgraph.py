"""Sparse tracklet graph: neighbour selection, raw edge features and GT edge labels."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .core import GTRecord, Tracklet
from .geometry import giou, relative_geometry, time_difference
from .metrics import attribute_detections, majority_identity
from .motion import MotionNoise, fit_backward, fit_forward, midframe_boxes

EDGE_FEATURE_DIM = 8


@dataclass(frozen=True)
class GraphConfig:
    K: int = 10
    L_app: int = 5
    neighbor_score_weights: tuple[float, float, float] = (0.4, 0.3, 0.3)
    noise: MotionNoise = field(default_factory=MotionNoise)

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.L_app < 1:
            raise ValueError(f"L_app must be >= 1, got {self.L_app}")
        object.__setattr__(self, "neighbor_score_weights", tuple(self.neighbor_score_weights))


@dataclass
class TrackletGraph:
    nodes: list[Tracklet]
    edges: np.ndarray  # (E, 2) int, earlier node first, sorted
    raw_edge_features: np.ndarray  # (E, 8)
    node_inputs: np.ndarray  # (V, D_app)
    labels: Optional[np.ndarray] = None  # (E,) in {0, 1}

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return int(self.edges.shape[0])


def node_input(t: Tracklet) -> np.ndarray:
    if not t.has_embeddings():
        raise ValueError(f"tracklet {t.id} has detections without embeddings")
    return np.mean([d.embedding for d in t.detections], axis=0)


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


class _Summary:
    """Per-tracklet quantities reused by every edge the tracklet takes part in."""

    def __init__(self, t: Tracklet, cfg: GraphConfig):
        if not t.has_embeddings():
            raise ValueError(f"tracklet {t.id} has detections without embeddings")
        self.t = t
        emb = np.array([d.embedding for d in t.detections])
        self.mean = emb.mean(axis=0)
        k = min(cfg.L_app, len(emb))
        self.head = _unit(emb[:k])
        self.tail = _unit(emb[-k:])
        self.noise = cfg.noise
        self._fwd = None
        self._bwd = None

    @property
    def forward(self):
        if self._fwd is None:
            self._fwd = fit_forward(self.t, self.noise)
        return self._fwd

    @property
    def backward(self):
        if self._bwd is None:
            self._bwd = fit_backward(self.t, self.noise)
        return self._bwd


def appearance_features(t_a: Tracklet, t_b: Tracklet, L_app: int) -> np.ndarray:
    """[distance of mean embeddings, mean cosine of the gap-adjacent detections]."""
    if not (t_a.has_embeddings() and t_b.has_embeddings()):
        raise ValueError(f"tracklets {t_a.id} and {t_b.id} need embeddings on every detection")
    cfg = GraphConfig(L_app=L_app)
    return _appearance(_Summary(t_a, cfg), _Summary(t_b, cfg))


def _appearance(a: _Summary, b: _Summary) -> np.ndarray:
    dist = float(np.linalg.norm(b.mean - a.mean))
    return np.array([dist, float((a.tail @ b.head.T).mean())])


def _edge_feature(a: _Summary, b: _Summary, fps: float) -> np.ndarray:
    t_a, t_b = a.t, b.t
    if t_a.end() >= t_b.start():
        raise ValueError(
            f"edge features need {t_a.id} to end before {t_b.id} starts "
            f"({t_a.end()} vs {t_b.start()})"
        )
    geo = relative_geometry(t_a.detections[-1].box, t_b.detections[0].box)
    dt = time_difference(t_a.end(), t_b.start(), fps)
    box_a, box_b = midframe_boxes(a.forward, t_a.end(), b.backward, t_b.start())
    return np.concatenate([geo, [dt], _appearance(a, b), [giou(box_a, box_b)]])


def raw_edge_feature(
    t_a: Tracklet, t_b: Tracklet, cfg: GraphConfig, fps: float
) -> np.ndarray:
    """Geometry (4), time gap in seconds (1), appearance (2), mid-gap GIoU (1)."""
    if t_a.end() >= t_b.start():
        raise ValueError(
            f"edge features need {t_a.id} to end before {t_b.id} starts "
            f"({t_a.end()} vs {t_b.start()})"
        )
    return _edge_feature(_Summary(t_a, cfg), _Summary(t_b, cfg), fps)


def _neighbor_scores(tracklets: Sequence[Tracklet], cfg: GraphConfig) -> np.ndarray:
    """Composite dissimilarity (lower = closer) for every ordered pair."""
    n = len(tracklets)
    starts = np.array([t.start() for t in tracklets], dtype=np.float64)
    ends = np.array([t.end() for t in tracklets], dtype=np.float64)
    first = np.array([[t.detections[0].box.cx, t.detections[0].box.cy] for t in tracklets])
    last = np.array([[t.detections[-1].box.cx, t.detections[-1].box.cy] for t in tracklets])
    span = max(ends.max() - starts.min() + 1.0, 1.0)

    corners = np.array(
        [[d.box.x, d.box.y, d.box.x + d.box.w, d.box.y + d.box.h] for t in tracklets for d in t.detections]
    )
    diag = math.hypot(corners[:, 2].max() - corners[:, 0].min(), corners[:, 3].max() - corners[:, 1].min())
    diag = max(diag, 1.0)

    w_time, w_space, w_app = cfg.neighbor_score_weights
    gap = np.abs(starts[None, :] - ends[:, None]) / span
    space = np.linalg.norm(first[None, :, :] - last[:, None, :], axis=-1) / diag
    score = w_time * gap + w_space * space
    if w_app:
        means = _unit(np.array([node_input(t) for t in tracklets]))
        score = score + w_app * (1.0 - means @ means.T) / 2.0
    return score


def select_neighbors(tracklets: Sequence[Tracklet], cfg: GraphConfig):
    """Per node, its top-K successors and top-K predecessors by composite score.

    Returns (successors, predecessors) as lists of index lists.
    """
    n = len(tracklets)
    if n < 2:
        return [[] for _ in range(n)], [[] for _ in range(n)]
    score = _neighbor_scores(tracklets, cfg)
    starts = np.array([t.start() for t in tracklets])
    ends = np.array([t.end() for t in tracklets])
    # before[i, j]: i ends before j starts; score[i, j] compares i's end with j's start
    before = ends[:, None] < starts[None, :]
    succ, pred = [], []
    for i in range(n):
        cand = np.nonzero(before[i])[0]
        order = np.lexsort((cand, score[i, cand]))
        succ.append(sorted(int(j) for j in cand[order[: cfg.K]]))
        cand = np.nonzero(before[:, i])[0]
        order = np.lexsort((cand, score[cand, i]))
        pred.append(sorted(int(j) for j in cand[order[: cfg.K]]))
    return succ, pred


def build_graph(
    tracklets: Sequence[Tracklet],
    cfg: GraphConfig,
    fps: float,
) -> TrackletGraph:
    tracklets = list(tracklets)
    if not tracklets:
        raise ValueError("graph needs at least one tracklet")
    succ, pred = select_neighbors(tracklets, cfg)
    pairs = set()
    for i in range(len(tracklets)):
        pairs.update((i, j) for j in succ[i])
        pairs.update((j, i) for j in pred[i])
    edges = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
    summaries = [_Summary(t, cfg) for t in tracklets]
    feats = np.array(
        [_edge_feature(summaries[i], summaries[j], fps) for i, j in edges]
    ).reshape(-1, EDGE_FEATURE_DIM)
    nodes_in = np.array([s.mean for s in summaries])
    return TrackletGraph(tracklets, edges, feats, nodes_in)


def tracklet_identities(
    tracklets: Sequence[Tracklet], gt: Sequence[GTRecord], iou_gate: float = 0.5
) -> list[Optional[int]]:
    return [majority_identity(a)[0] for a in attribute_detections(tracklets, gt, iou_gate)]


def labels_from_identities(edges: np.ndarray, identities: Sequence[Optional[int]]) -> np.ndarray:
    out = np.zeros(len(edges))
    for k, (i, j) in enumerate(edges):
        a, b = identities[i], identities[j]
        out[k] = float(a is not None and a == b)
    return out


def label_edges(
    graph: TrackletGraph, gt: Sequence[GTRecord], iou_gate: float = 0.5
) -> TrackletGraph:
    ids = tracklet_identities(graph.nodes, gt, iou_gate)
    return TrackletGraph(
        graph.nodes,
        graph.edges,
        graph.raw_edge_features,
        graph.node_inputs,
        labels_from_identities(graph.edges, ids),
    )
