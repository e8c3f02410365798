"""Target classifiers: layer specs, forward pass, prediction and SGD training.

The classifier stands in for the large pretrained models a sparse attack is
normally run against. Its parameters are frozen (read-only arrays) once it
has been trained or loaded, and attacks only ever bind them as graph
constants.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Graph, Tensor, broadcast_to, conv2d, matmul, relu, reshape, softmax_cross_entropy
from .exceptions import ContractError, DimensionError, NumericError, TrainingError
from .models import TRAIN, Dataset
from .optim import sgd_momentum_update
from .seeding import stream

logger = logging.getLogger(__name__)

LAYER_KINDS = {"dense": 0, "conv": 1, "relu": 2}
LAYER_PARAMS = {"dense": ("weight", "bias"), "conv": ("kernels", "bias"), "relu": ()}


@dataclass
class LayerSpec:
    """
    One layer of a classifier.

    Attributes:
        kind: ``"dense"``, ``"conv"`` or ``"relu"``.
        params: Parameter arrays, ``weight``/``bias`` for dense layers and
            ``kernels``/``bias`` for convolutions.
        stride: Convolution stride.
        padding: Convolution zero padding.
    """
    kind: str
    params: dict[str, np.ndarray] = field(default_factory=dict)
    stride: int = 1
    padding: int = 0


@dataclass
class ClassifierModel:
    """
    A feedforward/convolutional classifier f: [0,1]^(h x w x c) -> R^K.

    Attributes:
        input_shape: Image shape (h, w, c).
        num_classes: Number of logits K.
        layers: Layers applied in order.
    """
    input_shape: tuple[int, int, int]
    num_classes: int
    layers: list[LayerSpec]

    @property
    def num_pixels(self) -> int:
        return int(np.prod(self.input_shape))

    def bind(self, graph: Graph, trainable: bool = False) -> list[dict[str, Tensor]]:
        """Place every parameter on ``graph`` as a leaf."""
        return [
            {name: graph.leaf(layer.params[name], requires_grad=trainable) for name in LAYER_PARAMS[layer.kind]}
            for layer in self.layers
        ]

    def forward(self, x: Tensor, bound: list[dict[str, Tensor]] | None = None) -> Tensor:
        """Logits for one image (K) or a batch (n x K)."""
        batched = len(x.shape) == 4
        if tuple(x.shape[-3:]) != tuple(self.input_shape) or len(x.shape) not in (3, 4):
            raise DimensionError(f"classifier expects images of shape {self.input_shape}, got {x.shape}")
        if bound is None:
            bound = self.bind(x.graph)
        rows = x.shape[0] if batched else 1

        h = x
        for layer, params in zip(self.layers, bound):
            if layer.kind == "conv":
                h = conv2d(h, params["kernels"], layer.stride, layer.padding)
                h = h + broadcast_to(params["bias"], h.shape)
            elif layer.kind == "dense":
                h = matmul(reshape(h, (rows, h.size // rows)), params["weight"])
                h = h + broadcast_to(params["bias"], h.shape)
            else:
                h = relu(h)

        if h.shape != (rows, self.num_classes):
            raise DimensionError(f"classifier produced shape {h.shape}, expected ({rows}, {self.num_classes})")
        return h if batched else reshape(h, (self.num_classes,))

    def parameters(self):
        for index, layer in enumerate(self.layers):
            for name in LAYER_PARAMS[layer.kind]:
                yield index, name, layer.params[name]

    def checksum(self) -> str:
        """SHA-256 over each layer's kind code followed by its little-endian float64 parameters."""
        digest = hashlib.sha256()
        for layer in self.layers:
            digest.update(bytes([LAYER_KINDS[layer.kind]]))
            for name in LAYER_PARAMS[layer.kind]:
                digest.update(np.ascontiguousarray(layer.params[name], dtype="<f8").tobytes())
        return digest.hexdigest()

    def freeze(self) -> "ClassifierModel":
        for _, _, array in self.parameters():
            array.flags.writeable = False
        return self

    def copy(self) -> "ClassifierModel":
        """Deep, writeable copy."""
        layers = [
            LayerSpec(layer.kind, {k: np.array(v, dtype=np.float64) for k, v in layer.params.items()},
                      layer.stride, layer.padding)
            for layer in self.layers
        ]
        return ClassifierModel(tuple(self.input_shape), self.num_classes, layers)


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def dense_layer(rng: np.random.Generator, fan_in: int, fan_out: int) -> LayerSpec:
    return LayerSpec("dense", {"weight": _uniform(rng, (fan_in, fan_out), fan_in),
                               "bias": np.zeros(fan_out)})


def conv_layer(rng: np.random.Generator, size: int, c_in: int, c_out: int, padding: int) -> LayerSpec:
    return LayerSpec("conv", {"kernels": _uniform(rng, (size, size, c_in, c_out), size * size * c_in),
                              "bias": np.zeros(c_out)}, stride=1, padding=padding)


def default_classifier(seed: int, input_shape: tuple[int, int, int] = (16, 16, 1),
                       num_classes: int = 10) -> ClassifierModel:
    """conv(3x3, 8)-relu-conv(3x3, 16)-relu-dense(K) with same padding."""
    rng = stream(seed, "init")
    h, w, c = input_shape
    layers = [
        conv_layer(rng, 3, c, 8, padding=1),
        LayerSpec("relu"),
        conv_layer(rng, 3, 8, 16, padding=1),
        LayerSpec("relu"),
        dense_layer(rng, h * w * 16, num_classes),
    ]
    return ClassifierModel(tuple(input_shape), num_classes, layers)


def linear_classifier(seed: int, input_shape: tuple[int, int, int] = (3, 3, 1),
                      num_classes: int = 2, weight_scale: float = 1.0) -> ClassifierModel:
    """A single dense layer; with the 3x3x1 default it is small enough for exhaustive pixel-subset search."""
    rng = stream(seed, "init")
    n = int(np.prod(input_shape))
    layer = LayerSpec("dense", {"weight": rng.normal(0.0, weight_scale, size=(n, num_classes)),
                                "bias": rng.normal(0.0, 0.1 * weight_scale, size=num_classes)})
    return ClassifierModel(tuple(input_shape), num_classes, [layer]).freeze()


def check_image(model: ClassifierModel, image: np.ndarray) -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.shape != tuple(model.input_shape):
        raise DimensionError(f"image shape {image.shape} does not match model input {model.input_shape}")
    if image.size and (image.min() < 0.0 or image.max() > 1.0):
        raise ContractError("image values must lie in [0, 1]")
    return image


def predict_logits(model: ClassifierModel, image: np.ndarray) -> np.ndarray:
    image = check_image(model, image)
    graph = Graph()
    return np.array(model.forward(graph.constant(image)).value)


def predict_class(model: ClassifierModel, image: np.ndarray) -> int:
    """argmax of the logits; ties go to the lowest class index."""
    return int(np.argmax(predict_logits(model, image)))


def predict_batch(model: ClassifierModel, images: np.ndarray, batch_size: int = 256) -> np.ndarray:
    """Logits for an (n, h, w, c) stack, evaluated in batches."""
    images = np.asarray(images, dtype=np.float64)
    if images.shape[0] == 0:
        return np.zeros((0, model.num_classes))
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        graph = Graph()
        chunks.append(np.array(model.forward(graph.constant(images[start:start + batch_size])).value))
    return np.concatenate(chunks)


def evaluate_accuracy(model: ClassifierModel, images: np.ndarray, labels: np.ndarray) -> float | None:
    """Fraction of correctly classified images, or None for an empty set."""
    if len(labels) == 0:
        return None
    predictions = np.argmax(predict_batch(model, images), axis=1)
    return float(np.mean(predictions == np.asarray(labels)))


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss: float
    train_accuracy: float | None
    val_accuracy: float | None


@dataclass
class TrainingHistory:
    initial_train_accuracy: float | None
    initial_val_accuracy: float | None
    epochs: list[EpochStats] = field(default_factory=list)

    @property
    def final_val_accuracy(self) -> float | None:
        return self.epochs[-1].val_accuracy if self.epochs else self.initial_val_accuracy

    @property
    def final_train_accuracy(self) -> float | None:
        return self.epochs[-1].train_accuracy if self.epochs else self.initial_train_accuracy


def train(model: ClassifierModel, dataset: Dataset, epochs: int, lr: float, momentum: float,
          seed: int, batch_size: int = 32) -> tuple[ClassifierModel, TrainingHistory]:
    """
    Minibatch SGD with momentum on the cross-entropy loss.

    The train split is used for updates; if the dataset carries no train-tagged
    images every image is used. The input model is left untouched.

    Args:
        model: Initial model.
        dataset: Labelled images.
        epochs: Passes over the training images.
        lr: Learning rate.
        momentum: Momentum coefficient.
        seed: Seed of the minibatch shuffling stream.
        batch_size: Minibatch size.

    Returns:
        The trained, frozen model and the per-epoch accuracy history.

    Raises:
        ContractError: If the dataset is empty.
        TrainingError: If the loss or gradients become non-finite.
    """
    if len(dataset) == 0:
        raise ContractError("cannot train on an empty dataset")
    fit = dataset.train if np.any(dataset.splits == TRAIN) else dataset
    held_out = dataset.val

    trained = model.copy()
    velocity = [{name: np.zeros_like(array) for name, array in layer.params.items()} for layer in trained.layers]
    history = TrainingHistory(
        evaluate_accuracy(trained, fit.images, fit.labels),
        evaluate_accuracy(trained, held_out.images, held_out.labels),
    )
    rng = stream(seed, "batches")

    for epoch in range(epochs):
        order = rng.permutation(len(fit))
        losses = []
        for start in range(0, len(fit), batch_size):
            batch = order[start:start + batch_size]
            graph = Graph()
            bound = trained.bind(graph, trainable=True)
            try:
                logits = trained.forward(graph.constant(fit.images[batch]), bound)
                loss = softmax_cross_entropy(logits, fit.labels[batch])
                graph.backward(loss)
                for layer, vel, tensors in zip(trained.layers, velocity, bound):
                    grads = {name: t.grad for name, t in tensors.items() if t.grad is not None}
                    sgd_momentum_update(layer.params, vel, grads, lr, momentum)
            except NumericError as exc:
                raise TrainingError(epoch, str(exc)) from exc
            losses.append(loss.item())

        stats = EpochStats(
            epoch,
            float(np.mean(losses)),
            evaluate_accuracy(trained, fit.images, fit.labels),
            evaluate_accuracy(trained, held_out.images, held_out.labels),
        )
        history.epochs.append(stats)
        logger.info("epoch %d: loss %.4f train acc %s val acc %s", epoch, stats.loss,
                    stats.train_accuracy, stats.val_accuracy)

    return trained.freeze(), history
