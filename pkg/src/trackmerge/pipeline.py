"""End-to-end glue: stage 1, training-set construction, training and association."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence

from .config import RunConfig
from .core import SequenceBundle, Tracklet, validate_bundle
from .dataio.augment import augment
from .hierarchy import HierarchyConfig, model_scorer, run_hierarchy, teacher_forced_levels
from .metrics import EvalReport, evaluate
from .mpnn import GraphTensors, ModelParams, TrainResult, train
from .stage1 import track_sequence

log = logging.getLogger(__name__)


class PipelineError(ValueError):
    pass


def check_bundle(bundle: SequenceBundle) -> None:
    problems = validate_bundle(bundle)
    if problems:
        raise PipelineError(f"{bundle.name}: {problems[0]}")


def track_bundle(bundle: SequenceBundle, cfg: RunConfig, th_c: Optional[float] = None) -> list[Tracklet]:
    """Stage-1 tracklets; ``th_c`` overrides the configured threshold."""
    stage1 = cfg.stage1 if th_c is None else replace(cfg.stage1, th_c=th_c)
    return track_sequence(bundle, stage1)


def _check_dim(dim: Optional[int], expected: int, what: str) -> None:
    if dim is not None and dim != expected:
        raise PipelineError(f"{what}: D_app mismatch, embeddings have {dim} dims, model expects {expected}")


def sequence_samples(bundle: SequenceBundle, cfg: RunConfig, seed: int) -> list[list[GraphTensors]]:
    """Teacher-forced, labelled level graphs for every augmented sample of one sequence."""
    if not bundle.ground_truth:
        raise PipelineError(f"{bundle.name}: training needs ground truth")
    aug = cfg.augment
    thresholds = list(aug.thresholds) if aug.tracklet_level else [cfg.stage1.th_c]
    by_threshold = {th: track_bundle(bundle, cfg, th) for th in thresholds}
    samples = augment(bundle, by_threshold, aug, seed, base_threshold=cfg.stage1.th_c)
    out = []
    for sample in samples:
        levels = teacher_forced_levels(
            sample.tracklets, sample.ground_truth, cfg.graph, sample.fps, cfg.hierarchy.levels
        )
        tensors = [GraphTensors.from_graph(g) for g in levels if g.num_edges]
        if tensors:
            out.append(tensors)
    log.info("%s: %d samples, %d training graphs", bundle.name, len(out), sum(map(len, out)))
    return out


def _samples_job(args):
    return sequence_samples(*args)


def build_training_set(
    bundles: Sequence[SequenceBundle], cfg: RunConfig, jobs: int = 1
) -> list[list[GraphTensors]]:
    """Samples of all sequences in input order; per-sequence seeds derive from ``cfg.seed``."""
    for b in bundles:
        check_bundle(b)
        _check_dim(b.embedding_dim, cfg.model.app_dim, b.name)
    args = [(b, cfg, cfg.seed * 1_000_003 + k) for k, b in enumerate(bundles)]
    if jobs > 1 and len(bundles) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_samples_job, args))
    else:
        parts = [_samples_job(a) for a in args]
    return [s for part in parts for s in part]


def train_model(
    bundles: Sequence[SequenceBundle], cfg: RunConfig, jobs: int = 1
) -> TrainResult:
    if cfg.hierarchy.levels > max(cfg.model.HL, 1):
        raise PipelineError(
            f"hierarchy.levels {cfg.hierarchy.levels} exceeds model.HL {cfg.model.HL}"
        )
    dataset = build_training_set(bundles, cfg, jobs)
    if not dataset:
        raise PipelineError("no training graphs: every sample has fewer than two tracklets")
    return train(dataset, cfg.train, cfg.model)


def associate(
    tracklets: Sequence[Tracklet],
    params: ModelParams,
    cfg: RunConfig,
    fps: float,
    trace: Optional[list] = None,
) -> list[Tracklet]:
    """Second stage: hierarchical merging, then optional interpolation."""
    levels = cfg.hierarchy.levels
    if levels > max(params.cfg.HL, 1):
        raise PipelineError(f"hierarchy.levels {levels} exceeds the checkpoint's HL {params.cfg.HL}")
    for t in tracklets:
        if not t.has_embeddings():
            raise PipelineError(f"tracklet {t.id} lacks embeddings for some detections")
        _check_dim(t.detections[0].embedding.shape[0], params.cfg.app_dim, f"tracklet {t.id}")
    post = cfg.postprocess
    return run_hierarchy(
        tracklets,
        model_scorer(params),
        cfg.graph,
        fps,
        HierarchyConfig(cfg.hierarchy.threshold, levels),
        trace,
        post.max_gap if post.interpolate else None,
    )


@dataclass
class PipelineResult:
    tracklets: list[Tracklet]
    trajectories: list[Tracklet]
    report: Optional[EvalReport]


def run_pipeline(bundle: SequenceBundle, params: ModelParams, cfg: RunConfig) -> PipelineResult:
    check_bundle(bundle)
    tracklets = track_bundle(bundle, cfg)
    trajectories = associate(tracklets, params, cfg, bundle.fps)
    report = evaluate(bundle.ground_truth, trajectories) if bundle.ground_truth else None
    return PipelineResult(tracklets, trajectories, report)
