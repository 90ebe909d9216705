"""Shared builders for small hand-made tracking scenes."""

from __future__ import annotations

import numpy as np
import pytest

from trackmerge.core import BBox, Detection, GTRecord, Tracklet


def make_tracklet(tid, frames, boxes, embedding=None, confidence=0.9):
    """Tracklet from frames and (x, y, w, h) tuples; ``embedding`` is shared or per-frame."""
    dets = []
    for k, (f, b) in enumerate(zip(frames, boxes)):
        if embedding is None:
            emb = None
        else:
            arr = np.asarray(embedding, dtype=float)
            emb = arr[k] if arr.ndim == 2 else arr
        dets.append(Detection(f, BBox(*b), confidence, emb, k))
    return Tracklet(tid, dets)


def cv_boxes(frames, cx0=50.0, cy0=60.0, vx=2.0, vy=1.0, w=20.0, h=40.0):
    """Exact constant-velocity boxes at the given frames."""
    return [(cx0 + vx * f - w / 2, cy0 + vy * f - h / 2, w, h) for f in frames]


def gt_track(identity, frames, boxes):
    return [GTRecord(f, identity, BBox(*b)) for f, b in zip(frames, boxes)]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_graph_tensors(rng, n_nodes, n_edges, app_dim=16, labelled=True):
    """Random GraphTensors with distinct earlier-to-later edges."""
    from trackmerge.mpnn import GraphTensors
    from trackmerge.tgraph import EDGE_FEATURE_DIM

    pairs = [(i, j) for i in range(n_nodes) for j in range(i + 1, n_nodes)]
    pick = sorted(rng.choice(len(pairs), size=n_edges, replace=False))
    edges = np.array([pairs[k] for k in pick], dtype=np.int64).reshape(-1, 2)
    return GraphTensors(
        rng.normal(size=(n_nodes, app_dim)),
        rng.normal(size=(n_edges, EDGE_FEATURE_DIM)),
        edges[:, 0].copy(),
        edges[:, 1].copy(),
        rng.integers(0, 2, size=n_edges).astype(float) if labelled else None,
    )


def permute_graph(g, perm):
    """Relabel node k as perm[k]; edges keep their order."""
    from trackmerge.mpnn import GraphTensors

    inv = np.argsort(perm)
    return GraphTensors(g.node_inputs[inv], g.edge_inputs, perm[g.src], perm[g.dst], g.labels)


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


def acceptance_line(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2])):
            terminalreporter.write_line(line)
