"""Trainable encoders mapping a perturbation to a same-shaped pre-mask tensor.

Two structures are provided: a single fully-connected layer over the
flattened perturbation, and a small same-padded convolutional network. Both
produce h x w x c outputs when channels are independent and h x w x 1 outputs
(later broadcast over channels) when one mask entry covers a whole position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core.autodiff import Graph, Tensor, broadcast_to, conv2d, matmul, relu, reshape, scale
from ..core.exceptions import ConfigError, DimensionError
from ..core.models import ENCODER_KINDS
from ..core.optim import sgd_momentum_update
from ..core.seeding import stream

CONV_HIDDEN = 8


@dataclass(frozen=True)
class EncoderSpec:
    """
    Structure of an encoder.

    Attributes:
        kind: ``"fc"`` or ``"conv"``.
        input_shape: Perturbation shape (h, w, c).
        channel_independent: One mask entry per component rather than per position.
        seed: Initialization seed.
        input_scale: Factor applied to the perturbation before the first layer.
    """
    kind: str
    input_shape: tuple[int, int, int]
    channel_independent: bool = True
    seed: int = 0
    input_scale: float = 1.0

    @property
    def output_shape(self) -> tuple[int, int, int]:
        h, w, c = self.input_shape
        return (h, w, c) if self.channel_independent else (h, w, 1)


@dataclass
class EncoderParams:
    """Encoder parameters plus the velocity buffers of their optimizer."""
    spec: EncoderSpec
    params: dict[str, np.ndarray]
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.velocity:
            self.velocity = {name: np.zeros_like(array) for name, array in self.params.items()}

    @property
    def num_weights(self) -> int:
        return int(sum(array.size for name, array in self.params.items() if not name.startswith("bias")))

    def bind(self, graph: Graph) -> dict[str, Tensor]:
        return {name: graph.variable(array) for name, array in self.params.items()}


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_encoder(spec: EncoderSpec) -> EncoderParams:
    """Variance-preserving uniform weights (scale 1/sqrt(fan_in)) and zero biases."""
    if spec.kind not in ENCODER_KINDS:
        raise ConfigError(f"unknown encoder kind '{spec.kind}'")
    rng = stream(spec.seed, "encoder")
    h, w, c = spec.input_shape
    c_out = spec.output_shape[2]
    if spec.kind == "fc":
        n_in, n_out = h * w * c, h * w * c_out
        params = {"weight": _uniform(rng, (n_in, n_out), n_in), "bias": np.zeros(n_out)}
    else:
        params = {
            "kernels1": _uniform(rng, (3, 3, c, CONV_HIDDEN), 9 * c),
            "bias1": np.zeros(CONV_HIDDEN),
            "kernels2": _uniform(rng, (3, 3, CONV_HIDDEN, c_out), 9 * CONV_HIDDEN),
            "bias2": np.zeros(c_out),
        }
    return EncoderParams(spec, params)


def encode(params: EncoderParams, delta: Tensor, bound: dict[str, Tensor] | None = None) -> Tensor:
    """H(delta), differentiable with respect to delta and to the bound parameters."""
    spec = params.spec
    if tuple(delta.shape) != tuple(spec.input_shape):
        raise DimensionError(f"encoder expects input shape {spec.input_shape}, got {delta.shape}")
    if bound is None:
        bound = params.bind(delta.graph)
    if spec.input_scale != 1.0:
        delta = scale(delta, spec.input_scale)
    if spec.kind == "fc":
        flat = reshape(delta, (1, delta.size))
        out = matmul(flat, bound["weight"])
        out = out + broadcast_to(bound["bias"], out.shape)
        return reshape(out, spec.output_shape)
    hidden = conv2d(delta, bound["kernels1"], stride=1, padding=1)
    hidden = relu(hidden + broadcast_to(bound["bias1"], hidden.shape))
    out = conv2d(hidden, bound["kernels2"], stride=1, padding=1)
    return out + broadcast_to(bound["bias2"], out.shape)


def sgd_momentum_step(params: EncoderParams, grads: dict[str, np.ndarray], lr: float,
                      momentum: float) -> EncoderParams:
    """``v <- momentum * v + g; p <- p - lr * v`` for every encoder parameter, in place."""
    sgd_momentum_update(params.params, params.velocity, grads, lr, momentum)
    return params
