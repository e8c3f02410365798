"""Stochastic gradient descent with momentum, shared by classifier training and the encoder."""

import numpy as np

from .exceptions import DimensionError, OptimizationError


def sgd_momentum_update(params: dict[str, np.ndarray], velocity: dict[str, np.ndarray],
                        grads: dict[str, np.ndarray], lr: float, momentum: float) -> None:
    """Apply ``v <- momentum * v + g; p <- p - lr * v`` in place for every named parameter.

    Parameters without an entry in ``grads`` are treated as having zero gradient.

    Raises:
        OptimizationError: If any gradient contains NaN or infinity.
        DimensionError: If a gradient shape differs from its parameter.
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise OptimizationError(f"non-finite gradient for parameter '{name}'")
        if grad.shape != params[name].shape:
            raise DimensionError(
                f"gradient for '{name}' has shape {grad.shape}, parameter has {params[name].shape}"
            )
    for name, param in params.items():
        grad = grads.get(name)
        v = velocity[name]
        v *= momentum
        if grad is not None:
            v += grad
        param -= lr * v
