"""Define-by-run reverse-mode automatic differentiation on float64 arrays.

A :class:`Graph` records every operation applied to its tensors, in
execution order, together with a closure that maps the gradient of the
operation's output to gradients of its inputs. Because nodes are appended as
they are computed, the node list is always a valid topological order and
:meth:`Graph.backward` simply walks it in reverse.

A new graph is built for every forward evaluation; graphs are cheap and are
never shared between workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .exceptions import ContractError, DimensionError, NumericError

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


@dataclass
class Node:
    """One recorded operation: its kind, input node ids and cached output."""

    kind: str
    inputs: tuple[int, ...]
    value: np.ndarray
    requires_grad: bool
    backward: BackwardFn | None = None


class Tensor:
    """Handle to a node of a :class:`Graph`.

    The value is an n-dimensional float64 array; ``data`` exposes it as the
    flat row-major sequence and ``shape`` as the shape metadata.
    """

    __slots__ = ("graph", "node_id")

    def __init__(self, graph: Graph, node_id: int):
        self.graph = graph
        self.node_id = node_id

    @property
    def value(self) -> np.ndarray:
        return self.graph.nodes[self.node_id].value

    @property
    def data(self) -> np.ndarray:
        return self.value.reshape(-1)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    @property
    def requires_grad(self) -> bool:
        return self.graph.nodes[self.node_id].requires_grad

    @property
    def grad(self) -> np.ndarray | None:
        return self.graph.gradients.get(self.node_id)

    def item(self) -> float:
        if self.value.size != 1:
            raise ContractError(f"item() needs a single element, tensor has shape {self.shape}")
        return float(self.value.reshape(()))

    def __add__(self, other: Tensor) -> Tensor:
        return add(self, other)

    def __sub__(self, other: Tensor) -> Tensor:
        return sub(self, other)

    def __mul__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __neg__(self) -> Tensor:
        return scale(self, -1.0)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)

    def __repr__(self) -> str:
        kind = self.graph.nodes[self.node_id].kind
        return f"Tensor(node={self.node_id}, kind={kind}, shape={self.shape})"


class Graph:
    """Ordered record of operations plus the gradient map filled by backward()."""

    def __init__(self):
        self.nodes: list[Node] = []
        self.gradients: dict[int, np.ndarray] = {}

    def leaf(self, value, requires_grad: bool = False) -> Tensor:
        array = np.array(value, dtype=np.float64)
        return self._append(Node("leaf", (), array, requires_grad))

    def constant(self, value) -> Tensor:
        return self.leaf(value, requires_grad=False)

    def variable(self, value) -> Tensor:
        return self.leaf(value, requires_grad=True)

    def record(self, kind: str, inputs: Sequence[Tensor], value: np.ndarray,
               backward: BackwardFn) -> Tensor:
        ids = []
        for tensor in inputs:
            if tensor.graph is not self:
                raise ContractError(f"{kind}: operand belongs to a different graph")
            ids.append(tensor.node_id)
        requires_grad = any(self.nodes[i].requires_grad for i in ids)
        value = np.asarray(value, dtype=np.float64)
        node = Node(kind, tuple(ids), value, requires_grad, backward if requires_grad else None)
        return self._append(node)

    def _append(self, node: Node) -> Tensor:
        if not np.all(np.isfinite(node.value)):
            raise NumericError(f"{node.kind} produced non-finite values")
        node.value.flags.writeable = False
        self.nodes.append(node)
        return Tensor(self, len(self.nodes) - 1)

    def backward(self, loss: Tensor) -> dict[int, np.ndarray]:
        """Accumulate d(loss)/d(node) into ``gradients`` for every ancestor that requires it."""
        if loss.graph is not self:
            raise ContractError("backward: loss belongs to a different graph")
        if loss.value.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")

        pending = {loss.node_id: np.ones_like(loss.value)}
        for node_id in range(loss.node_id, -1, -1):
            node = self.nodes[node_id]
            upstream = pending.get(node_id)
            if upstream is None or not node.requires_grad:
                continue
            previous = self.gradients.get(node_id)
            self.gradients[node_id] = upstream if previous is None else previous + upstream
            if node.backward is None:
                continue
            for input_id, grad in zip(node.inputs, node.backward(upstream)):
                if grad is None or not self.nodes[input_id].requires_grad:
                    continue
                if input_id in pending:
                    pending[input_id] = pending[input_id] + grad
                else:
                    pending[input_id] = grad
        return self.gradients

    def zero_grad(self) -> None:
        self.gradients = {}


def _same_shape(kind: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{kind}: operand shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return a.graph.record("add", (a, b), a.value + b.value, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return a.graph.record("sub", (a, b), a.value - b.value, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    av, bv = a.value, b.value
    return a.graph.record("mul", (a, b), av * bv, lambda g: (g * bv, g * av))


def scale(a: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return a.graph.record("scale", (a,), a.value * factor, lambda g: (g * factor,))


def relu(a: Tensor) -> Tensor:
    active = a.value > 0
    return a.graph.record("relu", (a,), np.where(active, a.value, 0.0), lambda g: (g * active,))


def sigmoid(a: Tensor) -> Tensor:
    # expit never overflows, so large |z| (alpha_end times the pre-mask) saturates cleanly.
    s = special.expit(a.value)
    return a.graph.record("sigmoid", (a,), s, lambda g: (g * s * (1.0 - s),))


def absolute(a: Tensor) -> Tensor:
    signs = np.sign(a.value)
    return a.graph.record("abs", (a,), np.abs(a.value), lambda g: (g * signs,))


def elementwise(op: str, *inputs: Tensor, factor: float | None = None) -> Tensor:
    """Dispatch one of add, sub, mul, scale, relu, sigmoid by name."""
    binary = {"add": add, "sub": sub, "mul": mul}
    unary = {"relu": relu, "sigmoid": sigmoid, "abs": absolute}
    if op in binary:
        if len(inputs) != 2:
            raise ContractError(f"{op} takes two operands, got {len(inputs)}")
        return binary[op](*inputs)
    if op == "scale":
        if len(inputs) != 1 or factor is None:
            raise ContractError("scale takes one operand and a factor")
        return scale(inputs[0], factor)
    if op in unary:
        if len(inputs) != 1:
            raise ContractError(f"{op} takes one operand, got {len(inputs)}")
        return unary[op](inputs[0])
    raise ContractError(f"unknown elementwise operation '{op}'")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    av, bv = a.value, b.value
    if av.ndim != 2 or bv.ndim != 2 or av.shape[1] != bv.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {av.shape} by {bv.shape}")
    return a.graph.record("matmul", (a, b), av @ bv, lambda g: (g @ bv.T, av.T @ g))


def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    if int(np.prod(shape)) != a.size:
        raise DimensionError(f"reshape: cannot view {a.shape} as {shape}")
    original = a.shape
    return a.graph.record("reshape", (a,), a.value.reshape(shape), lambda g: (g.reshape(original),))


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def broadcast_to(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        value = np.broadcast_to(a.value, shape).copy()
    except ValueError as exc:
        raise DimensionError(f"broadcast_to: cannot broadcast {a.shape} to {shape}") from exc
    original = a.shape
    return a.graph.record("broadcast", (a,), value, lambda g: (_unbroadcast(g, original),))


def total(a: Tensor) -> Tensor:
    """Sum of all elements as a scalar tensor."""
    ones = np.ones_like(a.value)
    return a.graph.record("sum", (a,), np.sum(a.value), lambda g: (g * ones,))


def mean(a: Tensor) -> Tensor:
    return scale(total(a), 1.0 / a.size)


def detach(a: Tensor) -> Tensor:
    return a.graph.constant(a.value)


def conv2d(x: Tensor, kernels: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlate an h x w x c_in input (optionally batched) with k x k x c_in x c_out kernels."""
    xv, kv = x.value, kernels.value
    if kv.ndim != 4 or kv.shape[0] != kv.shape[1]:
        raise DimensionError(f"conv2d: kernels must be k x k x c_in x c_out, got {kv.shape}")
    if xv.ndim not in (3, 4):
        raise DimensionError(f"conv2d: input must be h x w x c (or batched), got {xv.shape}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d: invalid stride {stride} or padding {padding}")
    batched = xv.ndim == 4
    xb = xv if batched else xv[None]
    if xb.shape[3] != kv.shape[2]:
        raise DimensionError(f"conv2d: input has {xb.shape[3]} channels, kernels expect {kv.shape[2]}")
    k = kv.shape[0]
    xp = np.pad(xb, ((0, 0), (padding, padding), (padding, padding), (0, 0)))
    if xp.shape[1] < k or xp.shape[2] < k:
        raise DimensionError(f"conv2d: padded input {xp.shape[1:3]} smaller than kernel {k}x{k}")

    windows = sliding_window_view(xp, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    out = np.tensordot(windows, kv, axes=([3, 4, 5], [2, 0, 1]))
    height, width = xb.shape[1], xb.shape[2]

    def backward(g: np.ndarray):
        gb = g if batched else g[None]
        grad_k = np.tensordot(windows, gb, axes=([0, 1, 2], [0, 1, 2])).transpose(1, 2, 0, 3)
        grad_xp = np.zeros_like(xp)
        rows, cols = gb.shape[1], gb.shape[2]
        for i in range(k):
            for j in range(k):
                grad_xp[:, i:i + stride * (rows - 1) + 1:stride,
                        j:j + stride * (cols - 1) + 1:stride, :] += gb @ kv[i, j].T
        grad_x = grad_xp[:, padding:padding + height, padding:padding + width, :]
        return (grad_x if batched else grad_x[0]), grad_k

    return x.graph.record("conv2d", (x, kernels), out if batched else out[0], backward)


def softmax_cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean of -log softmax(logits)[target] over rows; logits are K or n x K."""
    z = logits.value
    if z.ndim not in (1, 2) or z.shape[-1] < 2:
        raise DimensionError(f"softmax_cross_entropy: logits must be K or n x K with K >= 2, got {z.shape}")
    classes = z.shape[-1]
    targets = np.atleast_1d(np.asarray(target, dtype=np.int64))
    rows = z.reshape(-1, classes)
    if targets.shape != (rows.shape[0],):
        raise DimensionError(f"softmax_cross_entropy: {rows.shape[0]} rows but {targets.size} targets")
    if np.any(targets < 0) or np.any(targets >= classes):
        raise IndexError(f"target class out of range [0, {classes}): {targets.tolist()}")

    index = np.arange(rows.shape[0])
    log_probs = special.log_softmax(rows, axis=1)
    value = -np.mean(log_probs[index, targets])

    def backward(g: np.ndarray):
        grad = special.softmax(rows, axis=1)
        grad[index, targets] -= 1.0
        return ((g / rows.shape[0]) * grad).reshape(z.shape),

    return logits.graph.record("cross_entropy", (logits,), value, backward)
