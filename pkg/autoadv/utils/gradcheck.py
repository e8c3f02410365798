"""
Central finite differences for checking the analytic gradients of graph
operations.
"""

import logging
from typing import Callable

import numpy as np

from ..core.autodiff import Graph, Tensor

logger = logging.getLogger(__name__)


def finite_difference(func: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Centered-difference gradient of the scalar function ``func`` at ``x``, step ``h``."""
    x0 = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = x0.reshape(-1)
    out = grad.reshape(-1)
    for j in range(flat.size):
        saved = flat[j]
        flat[j] = saved + h
        fplus = func(x0.copy())
        flat[j] = saved - h
        fminus = func(x0.copy())
        flat[j] = saved
        out[j] = (fplus - fminus) / (2 * h)
    return grad


def analytic_gradients(build: Callable[..., Tensor], inputs: list[np.ndarray]) -> list[np.ndarray]:
    """Gradients of the scalar ``build(*tensors)`` with respect to every input, by backpropagation."""
    graph = Graph()
    tensors = [graph.variable(value) for value in inputs]
    graph.backward(build(*tensors))
    return [np.zeros_like(np.asarray(v, dtype=np.float64)) if t.grad is None else np.array(t.grad)
            for t, v in zip(tensors, inputs)]


def numeric_gradients(build: Callable[..., Tensor], inputs: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    grads = []
    for i in range(len(inputs)):
        def evaluate(value, i=i):
            graph = Graph()
            args = [graph.constant(value if j == i else inputs[j]) for j in range(len(inputs))]
            return build(*args).item()
        grads.append(finite_difference(evaluate, inputs[i], h))
    return grads


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> float:
    """max |a - n| / max(|a|, |n|, floor) over all entries."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    if analytic.size == 0:
        return 0.0
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def check_gradients(build: Callable[..., Tensor], inputs: list[np.ndarray], h: float = 1e-5) -> float:
    """Largest relative error between backpropagated and finite-difference gradients over all inputs."""
    errors = [max_relative_error(a, n) for a, n in
              zip(analytic_gradients(build, inputs), numeric_gradients(build, inputs, h))]
    worst = max(errors) if errors else 0.0
    logger.debug("gradient check over %d inputs: max relative error %.3e", len(inputs), worst)
    return worst
