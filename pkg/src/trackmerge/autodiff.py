"""Small reverse-mode autodiff over float64 numpy arrays, plus AdamW and checkpoints.

Only the operations the edge classifier needs are provided. Every op records
its parents and a closure that pushes the output gradient back to them;
``backward`` walks the recorded graph once in reverse topological order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

LOGIT_CLAMP = 30.0
CHECKPOINT_VERSION = 1


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, value, requires_grad: bool = False, name: str = ""):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, neg(as_tensor(other)))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(value)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _check_finite(value: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(value)):
        raise FloatingPointError(f"{op} produced non-finite values")
    return value


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # Only row-bias broadcasting ((n, d) + (d,)) and scalars are supported.
    if g.shape == shape:
        return g
    if len(shape) == 0:
        return np.asarray(g.sum())
    if len(shape) == 1 and g.ndim == 2 and g.shape[1] == shape[0]:
        return g.sum(axis=0)
    if len(shape) == 2 and shape[0] == 1 and g.ndim == 2 and g.shape[1] == shape[1]:
        return g.sum(axis=0, keepdims=True)
    raise ShapeError(f"cannot reduce gradient of shape {g.shape} to {shape}")


def _broadcastable(a: tuple, b: tuple) -> bool:
    if a == b or a == () or b == ():
        return True
    if len(a) == 2 and len(b) == 1 and a[1] == b[0]:
        return True
    if len(b) == 2 and len(a) == 1 and b[1] == a[0]:
        return True
    if len(a) == 2 and len(b) == 2 and a[1] == b[1] and 1 in (a[0], b[0]):
        return True
    return False


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.shape))

    return _result(a.value + b.value, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    def backward(g):
        a._accumulate(-g)

    return _result(-a.value, (a,), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if not _broadcastable(a.shape, b.shape):
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.value, a.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.value, b.shape))

    return _result(a.value * b.value, (a, b), backward)


def power(a: Tensor, exponent: float) -> Tensor:
    exponent = float(exponent)
    if exponent == 0.0:
        out_value = np.ones_like(a.value)
    else:
        out_value = _check_finite(a.value**exponent, "power")

    def backward(g):
        if exponent != 0.0:
            a._accumulate(g * exponent * a.value ** (exponent - 1.0))

    return _result(out_value, (a,), backward)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.value.ndim != 2 or b.value.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")

    def backward(g):
        if a.requires_grad:
            a._accumulate(g @ b.value.T)
        if b.requires_grad:
            b._accumulate(a.value.T @ g)

    return _result(a.value @ b.value, (a, b), backward)


def concat(parts: Sequence[Tensor], axis: int = 1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    ndims = {p.value.ndim for p in parts}
    if len(ndims) != 1:
        raise ShapeError(f"concat: mixed ranks {[p.shape for p in parts]}")
    try:
        value = np.concatenate([p.value for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: incompatible shapes {[p.shape for p in parts]}") from exc
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            if p.requires_grad:
                p._accumulate(np.take(g, np.arange(lo, hi), axis=axis))

    return _result(value, parts, backward)


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0

    def backward(g):
        a._accumulate(g * mask)

    return _result(a.value * mask, (a,), backward)


def sigmoid(a: Tensor) -> Tensor:
    s = 1.0 / (1.0 + np.exp(-a.value))

    def backward(g):
        a._accumulate(g * s * (1.0 - s))

    return _result(s, (a,), backward)


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.value >= lo) & (a.value <= hi)

    def backward(g):
        a._accumulate(g * inside)

    return _result(np.clip(a.value, lo, hi), (a,), backward)


def log(a: Tensor) -> Tensor:
    if np.any(a.value <= 0):
        raise FloatingPointError("log of a non-positive value")

    def backward(g):
        a._accumulate(g / a.value)

    return _result(np.log(a.value), (a,), backward)


def sum(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    def backward(g):
        a._accumulate(np.broadcast_to(g, a.shape))

    return _result(np.asarray(a.value.sum()), (a,), backward)


def mean(a: Tensor) -> Tensor:
    n = max(a.value.size, 1)

    def backward(g):
        a._accumulate(np.broadcast_to(g / n, a.shape))

    return _result(np.asarray(a.value.sum() / n), (a,), backward)


def _scatter_rows(index: np.ndarray, rows: np.ndarray, n: int) -> np.ndarray:
    """out[k] = sum of rows[i] with index[i] == k, added in the given row order."""
    out = np.zeros((n,) + rows.shape[1:])
    if index.size == 0:
        return out
    order = np.argsort(index, kind="stable")
    idx = index[order]
    starts = np.flatnonzero(np.r_[True, idx[1:] != idx[:-1]])
    out[idx[starts]] = np.add.reduceat(rows[order], starts, axis=0)
    return out


def gather_rows(a: Tensor, index) -> Tensor:
    index = np.asarray(index, dtype=np.int64)

    def backward(g):
        a._accumulate(_scatter_rows(index, g, a.shape[0]))

    return _result(a.value[index], (a,), backward)


def segment_sum(values: Tensor, segment_ids, num_segments: int) -> Tensor:
    """Sum the rows of ``values`` that share a segment id.

    Rows are added in their given order, so a fixed row order gives a
    bitwise-reproducible result.
    """
    segment_ids = np.asarray(segment_ids, dtype=np.int64)
    if segment_ids.ndim != 1 or segment_ids.shape[0] != values.shape[0]:
        raise ShapeError(
            f"segment_sum: ids of shape {segment_ids.shape} for values {values.shape}"
        )
    if segment_ids.size and (segment_ids.min() < 0 or segment_ids.max() >= num_segments):
        raise ValueError("segment_sum: segment id out of range")
    out = _scatter_rows(segment_ids, values.value, num_segments)

    def backward(g):
        values._accumulate(g[segment_ids])

    return _result(out, (values,), backward)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every tensor requiring it."""
    if loss.value.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    loss.grad = np.ones_like(loss.value)
    for node in reversed(_topological(loss)):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # Intermediate gradients are not needed once propagated.
            node.grad = None


def focal_loss(scores: Tensor, labels, gamma: float = 1.0) -> Tensor:
    """Mean of -(1 - p_t)^gamma * log(p_t) with p_t the probability of the true class."""
    y = np.asarray(labels, dtype=np.float64).reshape(scores.shape)
    p_t = scores * y + (1.0 - scores) * (1.0 - y)
    return mean(-(power(1.0 - p_t, gamma) * log(p_t)))


@dataclass
class AdamState:
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], grads: dict[str, np.ndarray], state: AdamState) -> None:
    """One AdamW update in place: decoupled weight decay, bias-corrected moments."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.value)
        if g.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p.value))
        v = state.v.setdefault(name, np.zeros_like(p.value))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            p.value -= state.lr * state.weight_decay * p.value
        p.value -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def save_tensors(path, tensors: dict[str, np.ndarray], hyperparameters: dict | None = None) -> None:
    """Write ``path`` (raw little-endian float64, concatenated) and ``path.json`` manifest."""
    path = Path(path)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "dtype": "<f8",
        "tensors": [],
        "hyperparameters": hyperparameters or {},
    }
    offset = 0
    with open(path, "wb") as fh:
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(arr.tobytes())
            manifest["tensors"].append({"name": name, "shape": list(arr.shape), "offset": offset})
            offset += arr.nbytes
    Path(str(path) + ".json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def load_tensors(path) -> tuple[dict[str, np.ndarray], dict]:
    path = Path(path)
    manifest_path = Path(str(path) + ".json")
    if not path.exists() or not manifest_path.exists():
        raise FileNotFoundError(f"checkpoint {path} or its manifest is missing")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {manifest.get('format_version')}")
    raw = path.read_bytes()
    out = {}
    for entry in manifest["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        end = start + 8 * count
        if end > len(raw):
            raise ValueError(f"checkpoint {path} is truncated at tensor {entry['name']}")
        out[entry["name"]] = np.frombuffer(raw[start:end], dtype="<f8").reshape(shape).copy()
    return out, manifest.get("hyperparameters", {})
