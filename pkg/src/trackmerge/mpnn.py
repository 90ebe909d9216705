"""Edge classifier over tracklet graphs: encoders, message passing, level adapters."""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import AdamState, Tensor
from .tgraph import EDGE_FEATURE_DIM, TrackletGraph

log = logging.getLogger(__name__)

NODE_DIM = 32
EDGE_DIM = 16
AGGREGATIONS = ("mean", "sum")


@dataclass(frozen=True)
class MpnnConfig:
    L_mp: int = 12
    HL: int = 3
    app_dim: int = 16
    node_hidden: int = 64
    edge_hidden: int = 32
    edge_update_hidden: int = 32
    node_update_hidden: int = 64
    classifier_hidden: int = 8
    message_uses_neighbor: bool = False
    aggregation: str = "mean"  # or "sum"
    seed: int = 0

    def __post_init__(self):
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if self.L_mp < 0:
            raise ValueError(f"L_mp must be >= 0, got {self.L_mp}")
        if self.HL < 0:
            raise ValueError(f"HL must be >= 0, got {self.HL}")

    def layer_sizes(self) -> dict[str, tuple[int, int, int]]:
        return {
            "node_enc": (self.app_dim, self.node_hidden, NODE_DIM),
            "edge_enc": (EDGE_FEATURE_DIM, self.edge_hidden, EDGE_DIM),
            "edge_update": (2 * NODE_DIM + EDGE_DIM, self.edge_update_hidden, EDGE_DIM),
            "node_update": (NODE_DIM + EDGE_DIM, self.node_update_hidden, NODE_DIM),
            "classifier": (EDGE_DIM, self.classifier_hidden, 1),
        }


class ModelParams:
    """Named float64 tensors; one set shared by every hierarchy level."""

    def __init__(self, tensors: dict[str, Tensor], cfg: MpnnConfig):
        self.tensors = tensors
        self.cfg = cfg

    @classmethod
    def initialize(cls, cfg: MpnnConfig, seed: Optional[int] = None) -> "ModelParams":
        rng = np.random.default_rng(cfg.seed if seed is None else seed)
        tensors: dict[str, Tensor] = {}
        for name, (n_in, n_hid, n_out) in cfg.layer_sizes().items():
            tensors[f"{name}.w1"] = rng.normal(0.0, math.sqrt(2.0 / n_in), (n_in, n_hid))
            tensors[f"{name}.b1"] = np.zeros(n_hid)
            tensors[f"{name}.w2"] = rng.normal(0.0, math.sqrt(1.0 / n_hid), (n_hid, n_out))
            tensors[f"{name}.b2"] = np.zeros(n_out)
        tensors["level_adapter"] = np.zeros((max(cfg.HL, 1), EDGE_DIM))
        return cls({k: Tensor(v, requires_grad=True, name=k) for k, v in tensors.items()}, cfg)

    @classmethod
    def zeros(cls, cfg: MpnnConfig) -> "ModelParams":
        p = cls.initialize(cfg)
        for t in p.tensors.values():
            t.value[...] = 0.0
        return p

    def copy(self) -> "ModelParams":
        return ModelParams(
            {k: Tensor(t.value.copy(), requires_grad=True, name=k) for k, t in self.tensors.items()},
            self.cfg,
        )

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.value for k, t in self.tensors.items()}

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def save(self, path, extra: Optional[dict] = None) -> None:
        hyper = {"model": asdict(self.cfg)}
        hyper.update(extra or {})
        ad.save_tensors(path, self.arrays(), hyper)

    @classmethod
    def load(cls, path) -> "ModelParams":
        arrays, hyper = ad.load_tensors(path)
        cfg = MpnnConfig(**hyper["model"])
        params = cls.initialize(cfg)
        missing = set(params.tensors) - set(arrays)
        if missing:
            raise ValueError(f"checkpoint {path} lacks tensors {sorted(missing)}")
        for name, t in params.tensors.items():
            if arrays[name].shape != t.shape:
                raise ValueError(
                    f"checkpoint tensor {name} has shape {arrays[name].shape}, expected {t.shape}"
                )
            t.value = arrays[name]
        return params


def mlp(params: ModelParams, name: str, x: Tensor) -> Tensor:
    h = ad.relu(x @ params[f"{name}.w1"] + params[f"{name}.b1"])
    return h @ params[f"{name}.w2"] + params[f"{name}.b2"]


@dataclass
class GraphTensors:
    """The numeric view of a TrackletGraph the network consumes."""

    node_inputs: np.ndarray
    edge_inputs: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    labels: Optional[np.ndarray] = None

    @classmethod
    def from_graph(cls, g: TrackletGraph) -> "GraphTensors":
        edges = g.edges.reshape(-1, 2)
        return cls(
            np.asarray(g.node_inputs, dtype=np.float64),
            np.asarray(g.raw_edge_features, dtype=np.float64).reshape(-1, EDGE_FEATURE_DIM),
            edges[:, 0].copy(),
            edges[:, 1].copy(),
            None if g.labels is None else np.asarray(g.labels, dtype=np.float64),
        )

    @property
    def num_nodes(self) -> int:
        return self.node_inputs.shape[0]

    @property
    def num_edges(self) -> int:
        return self.src.shape[0]


def init_features(g: GraphTensors, params: ModelParams, level: int) -> tuple[Tensor, Tensor]:
    n_levels = params["level_adapter"].shape[0]
    if not 0 <= level < max(params.cfg.HL, 1) or level >= n_levels:
        raise ValueError(f"level {level} outside the {params.cfg.HL} configured levels")
    f_nodes = mlp(params, "node_enc", Tensor(g.node_inputs))
    adapter = ad.gather_rows(params["level_adapter"], [level])
    f_edges = mlp(params, "edge_enc", Tensor(g.edge_inputs)) + adapter
    return f_nodes, f_edges


def message_pass(
    g: GraphTensors,
    f_nodes: Tensor,
    f_edges: Tensor,
    params: ModelParams,
    L_mp: int,
) -> tuple[Tensor, Tensor]:
    """Alternate edge and node updates; node update pools messages from incident edges.

    Edge update input is [earlier node, later node, edge]. Each node's message
    from an edge is U_n([own feature, updated edge]) (or the neighbour's feature
    when ``message_uses_neighbor``). Messages are summed, then divided by the
    degree under mean aggregation. Nodes without edges keep their feature.
    """
    n_edges = g.num_edges
    if n_edges == 0 or L_mp == 0:
        return f_nodes, f_edges
    receivers = np.concatenate([g.src, g.dst])
    senders = np.concatenate([g.dst, g.src])
    both = np.concatenate([np.arange(n_edges), np.arange(n_edges)])
    partner = senders if params.cfg.message_uses_neighbor else receivers
    degree = np.bincount(receivers, minlength=g.num_nodes)
    keep = Tensor(np.repeat((degree == 0).astype(np.float64)[:, None], f_nodes.shape[1], axis=1))
    scale = None
    if params.cfg.aggregation == "mean":
        inv = 1.0 / np.maximum(degree, 1).astype(np.float64)
        scale = Tensor(np.repeat(inv[:, None], f_nodes.shape[1], axis=1))

    for _ in range(L_mp):
        edge_in = ad.concat(
            [ad.gather_rows(f_nodes, g.src), ad.gather_rows(f_nodes, g.dst), f_edges]
        )
        f_edges = mlp(params, "edge_update", edge_in)
        msg_in = ad.concat([ad.gather_rows(f_nodes, partner), ad.gather_rows(f_edges, both)])
        messages = mlp(params, "node_update", msg_in)
        pooled = ad.segment_sum(messages, receivers, g.num_nodes)
        if scale is not None:
            pooled = pooled * scale
        f_nodes = pooled + f_nodes * keep
    return f_nodes, f_edges


def edge_logits(f_edges: Tensor, params: ModelParams) -> Tensor:
    return ad.clamp(mlp(params, "classifier", f_edges), -ad.LOGIT_CLAMP, ad.LOGIT_CLAMP)


def classify_edges(f_edges: Tensor, params: ModelParams) -> Tensor:
    """Edge scores in (0, 1), shape (E, 1)."""
    return ad.sigmoid(edge_logits(f_edges, params))


def forward(g: GraphTensors, params: ModelParams, level: int, L_mp: Optional[int] = None) -> Tensor:
    f_nodes, f_edges = init_features(g, params, level)
    _, f_edges = message_pass(g, f_nodes, f_edges, params, params.cfg.L_mp if L_mp is None else L_mp)
    return classify_edges(f_edges, params)


def predict(g: GraphTensors, params: ModelParams, level: int) -> np.ndarray:
    return forward(g, params, level).value.reshape(-1)


def sample_loss(levels: Sequence[GraphTensors], params: ModelParams, gamma: float = 1.0) -> Tensor:
    """Summed focal loss over the hierarchy levels of one sample."""
    total: Optional[Tensor] = None
    for level, g in enumerate(levels):
        if g.labels is None:
            raise ValueError(f"level {level} graph has no labels")
        if g.num_edges == 0:
            continue
        loss = ad.focal_loss(forward(g, params, level), g.labels, gamma)
        total = loss if total is None else total + loss
    return total if total is not None else Tensor(0.0)


@dataclass
class TrainConfig:
    epochs: int = 500
    lr: float = 3e-4
    weight_decay: float = 1e-4
    gamma: float = 1.0
    patience: int = 20
    min_delta: float = 1e-4
    seed: int = 0


@dataclass
class TrainResult:
    params: ModelParams
    history: list[float] = field(default_factory=list)
    epochs_run: int = 0


def train(
    dataset: Sequence[Sequence[GraphTensors]],
    cfg: TrainConfig,
    model_cfg: MpnnConfig,
    params: Optional[ModelParams] = None,
) -> TrainResult:
    """One AdamW step per sample per epoch; stops when the epoch loss plateaus."""
    for k, levels in enumerate(dataset):
        for level, g in enumerate(levels):
            if g.labels is None:
                raise ValueError(f"sample {k} level {level} is unlabelled")
    params = params or ModelParams.initialize(model_cfg, cfg.seed)
    state = AdamState(lr=cfg.lr, weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)
    history: list[float] = []
    best = math.inf
    stale = 0
    epoch = 0
    for epoch in range(1, cfg.epochs + 1):
        total = 0.0
        for k in rng.permutation(len(dataset)):
            params.zero_grad()
            loss = sample_loss(dataset[k], params, cfg.gamma)
            ad.backward(loss)
            grads = {n: t.grad for n, t in params.tensors.items() if t.grad is not None}
            ad.adam_step(params.tensors, grads, state)
            total += float(loss.value)
        mean_loss = total / max(len(dataset), 1)
        history.append(mean_loss)
        log.info("epoch %d loss %.6f", epoch, mean_loss)
        if mean_loss < best - cfg.min_delta:
            best = mean_loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    params.zero_grad()
    return TrainResult(params, history, epoch)
