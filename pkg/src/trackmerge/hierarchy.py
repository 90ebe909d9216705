"""Hierarchical inference: classify edges, round to chains, merge, repeat."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import BBox, Detection, GTRecord, Tracklet
from .metrics import attribute_detections, majority_identity
from .mpnn import GraphTensors, ModelParams, predict
from .tgraph import GraphConfig, TrackletGraph, build_graph, labels_from_identities


class MergeError(ValueError):
    pass


@dataclass
class MergeDecision:
    accepted: list[tuple[int, int]] = field(default_factory=list)
    scores: dict[tuple[int, int], float] = field(default_factory=dict)


@dataclass(frozen=True)
class HierarchyConfig:
    threshold: float = 0.5
    levels: int = 3


def round_edges(graph: TrackletGraph, scores, threshold: float = 0.5) -> MergeDecision:
    """Greedy projection of edge scores onto chains (<= 1 successor, <= 1 predecessor)."""
    scores = np.asarray(scores, dtype=np.float64).reshape(-1)
    edges = graph.edges.reshape(-1, 2)
    nodes = graph.nodes
    candidates = [
        (-float(s), int(nodes[i].id), int(nodes[j].id), int(i), int(j))
        for (i, j), s in zip(edges, scores)
        if s > threshold
    ]
    candidates.sort()
    succ: dict[int, int] = {}
    pred: dict[int, int] = {}
    decision = MergeDecision()
    for neg, _, _, i, j in candidates:
        if i in succ or j in pred:
            continue
        # Walk to the chain ends to make sure the joined chain stays time-ordered.
        tail = i
        head = j
        while head in succ:
            head = succ[head]
        while tail in pred:
            tail = pred[tail]
        if head == tail or nodes[i].end() >= nodes[j].start():
            continue
        succ[i] = j
        pred[j] = i
        decision.accepted.append((i, j))
        decision.scores[(i, j)] = -neg
    return decision


def merge_tracklets(tracklets: Sequence[Tracklet], decision: MergeDecision) -> list[Tracklet]:
    """Collapse accepted chains; output ids are 0..n-1 in order of each chain's first input."""
    succ: dict[int, int] = {}
    pred: dict[int, int] = {}
    for i, j in decision.accepted:
        if i in succ or j in pred:
            raise MergeError(f"node {i if i in succ else j} has two accepted links")
        succ[i] = j
        pred[j] = i
    chains = []
    for start in range(len(tracklets)):
        if start in pred:
            continue
        chain = [start]
        while chain[-1] in succ:
            chain.append(succ[chain[-1]])
        chains.append(chain)
    if sum(len(c) for c in chains) != len(tracklets):
        raise MergeError("accepted links form a cycle")
    merged = []
    for chain in chains:
        dets: list[Detection] = []
        for k in chain:
            t = tracklets[k]
            if dets and dets[-1].frame >= t.start():
                raise MergeError(
                    f"chain overlaps in time at tracklet {t.id} (frame {t.start()})"
                )
            dets.extend(t.detections)
        merged.append(dets)
    return [Tracklet(i, dets) for i, dets in enumerate(merged)]


ScoreFn = Callable[[TrackletGraph, int], np.ndarray]


def model_scorer(params: ModelParams) -> ScoreFn:
    def score(graph: TrackletGraph, level: int) -> np.ndarray:
        return predict(GraphTensors.from_graph(graph), params, level)

    return score


def run_hierarchy(
    tracklets: Sequence[Tracklet],
    scorer: ScoreFn,
    graph_cfg: GraphConfig,
    fps: float,
    hierarchy_cfg: HierarchyConfig = HierarchyConfig(),
    trace: Optional[list] = None,
    max_gap: Optional[int] = None,
) -> list[Tracklet]:
    """Run ``levels`` rounds of graph build, scoring, rounding and merging.

    ``scorer`` is usually ``model_scorer(params)``; tests pass label oracles.
    When given, ``trace`` receives the tracklet count before every level and
    after the last one. A ``max_gap`` turns on linear interpolation of the
    final trajectories.
    """
    current = [t.renumbered(i) for i, t in enumerate(tracklets)]
    if trace is not None:
        trace.append(len(current))
    for level in range(hierarchy_cfg.levels):
        if len(current) < 2:
            if trace is not None:
                trace.append(len(current))
            continue
        graph = build_graph(current, graph_cfg, fps)
        if graph.num_edges:
            scores = scorer(graph, level)
            decision = round_edges(graph, scores, hierarchy_cfg.threshold)
        else:
            decision = MergeDecision()
        current = merge_tracklets(current, decision)
        if trace is not None:
            trace.append(len(current))
    if max_gap is not None:
        current = [interpolate(t, max_gap) for t in current]
    return current


def oracle_scorer(gt: Sequence[GTRecord], iou_gate: float = 0.5) -> ScoreFn:
    """Scores equal to ground-truth edge labels."""

    def score(graph: TrackletGraph, level: int) -> np.ndarray:
        ids = [majority_identity(a)[0] for a in attribute_detections(graph.nodes, gt, iou_gate)]
        return labels_from_identities(graph.edges, ids)

    return score


def teacher_forced_levels(
    tracklets: Sequence[Tracklet],
    gt: Sequence[GTRecord],
    graph_cfg: GraphConfig,
    fps: float,
    levels: int,
    iou_gate: float = 0.5,
) -> list[TrackletGraph]:
    """Labelled graphs for each level, merging between levels with the true labels."""
    current = [t.renumbered(i) for i, t in enumerate(tracklets)]
    # Attribution is per detection and merges never change the detection set.
    attributed = attribute_detections(current, gt, iou_gate)
    owner = {id(d): a for t, attrs in zip(current, attributed) for d, a in zip(t.detections, attrs)}
    graphs = []
    for _ in range(levels):
        if len(current) < 2:
            break
        graph = build_graph(current, graph_cfg, fps)
        ids = [majority_identity([owner[id(d)] for d in t.detections])[0] for t in current]
        graph.labels = labels_from_identities(graph.edges, ids)
        graphs.append(graph)
        if graph.num_edges == 0:
            break
        current = merge_tracklets(current, round_edges(graph, graph.labels, 0.5))
    return graphs


def interpolate(trajectory: Tracklet, max_gap: int = 20) -> Tracklet:
    """Fill internal gaps of at most ``max_gap`` missing frames with linear boxes."""
    dets = list(trajectory.detections)
    out: list[Detection] = [dets[0]]
    for a, b in zip(dets, dets[1:]):
        missing = b.frame - a.frame - 1
        if 1 <= missing <= max_gap:
            pa = np.array(a.box.as_tuple())
            pb = np.array(b.box.as_tuple())
            conf = min(a.confidence, b.confidence)
            span = b.frame - a.frame
            for f in range(a.frame + 1, b.frame):
                w = (f - a.frame) / span
                x, y, bw, bh = (1.0 - w) * pa + w * pb
                out.append(Detection(f, BBox(x, y, bw, bh), conf, None, -1))
        out.append(b)
    return Tracklet(trajectory.id, out)
