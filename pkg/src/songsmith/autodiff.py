"""Reverse-mode automatic differentiation over dense float64 arrays.

Graphs are built define-by-run: every operation allocates a fresh Node
holding its forward value plus a closure mapping the output gradient to
input gradients. ``backward`` walks the graph in reverse topological order
and accumulates gradients additively, so a node reused in several places
just works. Values are C-contiguous float64 ndarrays; scalars are rank-0.

Single-threaded per graph. Distinct graphs share nothing mutable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ContractError, DimensionError

Array = np.ndarray

_ids = itertools.count()


def as_tensor(value) -> Array:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr  # ascontiguousarray would promote rank-0 to rank-1
    return np.ascontiguousarray(arr)


class Node:
    """One vertex of the computation graph."""

    __slots__ = ("nid", "op", "inputs", "value", "grad", "_bwd")

    def __init__(self, value: Array, op: str = "leaf",
                 inputs: tuple = (), bwd: Callable | None = None):
        self.nid = next(_ids)
        self.op = op
        self.inputs = inputs
        self.value = value
        self.grad: Array | None = None
        self._bwd = bwd

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self):
        return f"Node(nid={self.nid}, op={self.op!r}, shape={self.value.shape})"


def leaf(value) -> Node:
    """Wrap an array as a graph leaf (parameter or constant)."""
    return Node(as_tensor(value))


const = leaf


def _as_node(x) -> Node:
    return x if isinstance(x, Node) else leaf(x)


def _unbroadcast(g: Array, shape: tuple) -> Array:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def matmul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul shapes do not chain: {av.shape} @ {bv.shape}")
    return Node(av @ bv, "matmul", (a, b),
                lambda g: (g @ bv.T, av.T @ g))


def add(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    return Node(av + bv, "add", (a, b),
                lambda g: (_unbroadcast(g, av.shape), _unbroadcast(g, bv.shape)))


def mul(a: Node, b: Node) -> Node:
    av, bv = a.value, b.value
    return Node(av * bv, "mul", (a, b),
                lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(x: Node, k: float) -> Node:
    return mul(x, const(np.float64(k)))


def sub(a: Node, b: Node) -> Node:
    return add(a, scale(b, -1.0))


def concat(parts: Sequence[Node], axis: int = 0) -> Node:
    if not parts:
        raise ContractError("concat needs at least one input")
    vals = [p.value for p in parts]
    out = np.concatenate(vals, axis=axis)
    sizes = [v.shape[axis] for v in vals]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        return tuple(np.ascontiguousarray(np.take(g, range(offsets[i], offsets[i + 1]), axis=axis))
                     for i in range(len(vals)))

    return Node(out, "concat", tuple(parts), bwd)


def slice_(x: Node, axis: int, start: int, stop: int) -> Node:
    v = x.value
    if not (0 <= start <= stop <= v.shape[axis]):
        raise ContractError(f"slice [{start}:{stop}] out of bounds for axis {axis} "
                            f"of shape {v.shape}")
    index = tuple(slice(start, stop) if i == axis else slice(None) for i in range(v.ndim))

    def bwd(g):
        gz = np.zeros_like(v)
        gz[index] = g
        return (gz,)

    return Node(np.ascontiguousarray(v[index]), "slice", (x,), bwd)


def _sigmoid_values(x: Array) -> Array:
    z = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x: Node) -> Node:
    s = _sigmoid_values(x.value)
    return Node(s, "sigmoid", (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Node) -> Node:
    t = np.tanh(x.value)
    return Node(t, "tanh", (x,), lambda g: (g * (1.0 - t * t),))


def log(x: Node) -> Node:
    v = x.value
    return Node(np.log(v), "log", (x,), lambda g: (g / v,))


def exp(x: Node) -> Node:
    e = np.exp(x.value)
    return Node(e, "exp", (x,), lambda g: (g * e,))


def softplus(x: Node) -> Node:
    v = x.value
    out = np.maximum(v, 0.0) + np.log1p(np.exp(-np.abs(v)))
    return Node(out, "softplus", (x,), lambda g: (g * _sigmoid_values(v),))


def softmax(x: Node, axis: int = -1) -> Node:
    v = x.value
    if not -v.ndim <= axis < v.ndim:
        raise ContractError(f"softmax axis {axis} out of range for rank {v.ndim}")
    shifted = v - v.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * s).sum(axis=axis, keepdims=True)
        return ((g - dot) * s,)

    return Node(s, "softmax", (x,), bwd)


def sum_all(x: Node) -> Node:
    v = x.value
    return Node(np.asarray(v.sum()), "sum", (x,),
                lambda g: (np.broadcast_to(g, v.shape).copy(),))


def mean_all(x: Node) -> Node:
    v = x.value
    n = v.size
    return Node(np.asarray(v.mean()), "mean", (x,),
                lambda g: (np.broadcast_to(g / n, v.shape).copy(),))


def gather(table: Node, ids) -> Node:
    idx = np.asarray(ids, dtype=np.int64)
    v = table.value
    if v.ndim != 2:
        raise DimensionError(f"gather expects a 2-d table, got shape {v.shape}")

    def bwd(g):
        gz = np.zeros_like(v)
        np.add.at(gz, idx, g)
        return (gz,)

    return Node(np.ascontiguousarray(v[idx]), "gather", (table,), bwd)


def lstm_gates(preact: Node, c_prev: Node) -> Node:
    """Fused LSTM cell update; output columns are [h ++ c].

    preact is (B, 4H) ordered [input | forget | candidate | output].
    Dispatches to the compiled kernel when built.
    """
    pv, cv = preact.value, c_prev.value
    if pv.ndim != 2 or cv.ndim != 2 or pv.shape[0] != cv.shape[0] \
            or pv.shape[1] != 4 * cv.shape[1]:
        raise DimensionError(f"lstm_gates shapes inconsistent: preact {pv.shape}, "
                             f"c_prev {cv.shape}")
    out, cache = kernels.lstm_gates_forward(pv, cv)
    return Node(out, "lstm_gates", (preact, c_prev),
                lambda g: kernels.lstm_gates_backward(cache, np.ascontiguousarray(g)))


def backward(loss: Node, params: Sequence[Node] | None = None) -> dict[int, Array]:
    """Populate gradients by reverse topological traversal.

    Returns a map from node id to gradient for ``params`` (zero for
    parameters the loss never touched); with ``params`` omitted, for every
    leaf reached from ``loss``. Also sets ``.grad`` on every visited node.
    """
    if loss.value.shape not in ((), (1,)):
        raise ContractError(f"backward needs a scalar loss, got shape {loss.value.shape}")

    order: list[Node] = []
    seen: set[int] = set()
    stack: list[tuple[Node, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if node.nid in seen:
            continue
        seen.add(node.nid)
        stack.append((node, True))
        for child in node.inputs:
            if child.nid not in seen:
                stack.append((child, False))

    grads: dict[int, Array] = {loss.nid: np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.get(node.nid)
        if g is None:
            continue
        node.grad = g
        if node._bwd is None or not node.inputs:
            continue
        parts = node._bwd(g)
        for child, part in zip(node.inputs, parts):
            if part is None:
                continue
            prev = grads.get(child.nid)
            grads[child.nid] = part if prev is None else prev + part

    if params is None:
        return {n.nid: grads[n.nid] for n in order if n.op == "leaf" and n.nid in grads}
    out = {}
    for p in params:
        out[p.nid] = grads.get(p.nid, np.zeros_like(p.value))
        p.grad = out[p.nid]
    return out


def finite_diff_grad(f: Callable[[Array], float], x: Array, eps: float = 1e-5) -> Array:
    """Central-difference gradient oracle, one coordinate at a time."""
    if eps <= 0:
        raise ContractError("finite_diff_grad needs eps > 0")
    x = as_tensor(x)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    while not it.finished:
        idx = it.multi_index
        xp = x.copy()
        xp[idx] += eps
        xm = x.copy()
        xm[idx] -= eps
        g[idx] = (float(f(xp)) - float(f(xm))) / (2.0 * eps)
        it.iternext()
    return g


@dataclass
class AdamState:
    """Optimizer moments; shapes mirror the parameter list."""

    step_count: int
    first_moment: list[Array]
    second_moment: list[Array]

    @classmethod
    def init(cls, params: Sequence[Array]) -> "AdamState":
        return cls(0, [np.zeros_like(p) for p in params],
                   [np.zeros_like(p) for p in params])


def adam_step(params: Sequence[Array], grads: Sequence[Array], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[list[Array], AdamState]:
    """Standard Adam update with bias correction; returns fresh arrays."""
    if lr <= 0:
        raise ContractError("adam_step needs lr > 0")
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ContractError("adam_step: params, grads, and state lengths differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ContractError(f"adam_step shape mismatch: param {p.shape} vs grad {g.shape}")
    t = state.step_count + 1
    new_params, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m2 = beta1 * m + (1.0 - beta1) * g
        v2 = beta2 * v + (1.0 - beta2) * g * g
        new_m.append(m2)
        new_v.append(v2)
        new_params.append(p - lr * (m2 / c1) / (np.sqrt(v2 / c2) + eps))
    return new_params, AdamState(t, new_m, new_v)


def clip_global_norm(grads: Sequence[Array], max_norm: float) -> list[Array]:
    total = np.sqrt(sum(float((g * g).sum()) for g in grads))
    if total <= max_norm or total == 0.0:
        return list(grads)
    factor = max_norm / total
    return [g * factor for g in grads]
