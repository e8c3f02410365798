"""Synthetic image data and the AADV binary container for models and datasets.

Container layout (all integers little-endian)::

    magic "AADV" | version u32 | payload u8 (1 = model, 2 = dataset)

    model:   h u32 | w u32 | c u32 | K u32 | layer count u32
             per layer: kind u8 (0 dense, 1 conv, 2 relu)
                        conv only: stride u32 | padding u32
                        per parameter (dense: weight, bias; conv: kernels, bias):
                            ndim u8 | dims u32 * ndim | float64 * prod(dims)

    dataset: n u32 | h u32 | w u32 | c u32 | K u32
             labels u32 * n | splits u8 * n | images float64 * (n*h*w*c)
"""

from __future__ import annotations

import logging
import math
import struct
from pathlib import Path

import numpy as np

from .classifier import LAYER_KINDS, LAYER_PARAMS, ClassifierModel, LayerSpec
from .exceptions import ContractError, FormatError
from .models import TRAIN, VAL, Dataset
from .seeding import stream

logger = logging.getLogger(__name__)

MAGIC = b"AADV"
VERSION = 1
PAYLOAD_MODEL = 1
PAYLOAD_DATASET = 2
MAX_CLASSES = 10
VAL_EVERY = 5

_KIND_NAMES = {code: name for name, code in LAYER_KINDS.items()}


def _grid(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    return np.mgrid[0:h, 0:w].astype(np.float64)


def _stripes(rng, h, w, direction):
    y, x = _grid(h, w)
    coordinate = {"h": y, "v": x, "d": (x + y) / np.sqrt(2), "a": (x - y) / np.sqrt(2)}[direction]
    period = rng.uniform(3.5, 5.5)
    phase = rng.uniform(0, period)
    return 0.5 + 0.5 * np.cos(2 * np.pi * (coordinate + phase) / period)


def _blob(rng, h, w, center, sigma):
    y, x = _grid(h, w)
    return np.exp(-((y - center[0]) ** 2 + (x - center[1]) ** 2) / (2 * sigma ** 2))


def _center_blob(rng, h, w):
    center = (h / 2 - 0.5 + rng.uniform(-1.5, 1.5), w / 2 - 0.5 + rng.uniform(-1.5, 1.5))
    return _blob(rng, h, w, center, rng.uniform(0.15, 0.22) * min(h, w))


def _ring(rng, h, w):
    y, x = _grid(h, w)
    cy, cx = h / 2 - 0.5 + rng.uniform(-1, 1), w / 2 - 0.5 + rng.uniform(-1, 1)
    radius = rng.uniform(0.25, 0.35) * min(h, w)
    r = np.sqrt((y - cy) ** 2 + (x - cx) ** 2)
    return np.exp(-((r - radius) / 1.0) ** 2)


def _checkerboard(rng, h, w):
    y, x = _grid(h, w)
    cell = int(rng.integers(2, 4))
    oy, ox = rng.integers(0, cell, size=2)
    return (((y + oy) // cell + (x + ox) // cell) % 2).astype(np.float64)


def _frame(rng, h, w):
    margin = int(rng.integers(1, max(2, min(h, w) // 5)))
    thickness = int(rng.integers(1, 3))
    pattern = np.zeros((h, w))
    pattern[margin:h - margin, margin:w - margin] = 1.0
    inner = margin + thickness
    pattern[inner:h - inner, inner:w - inner] = 0.0
    return pattern


def _cross(rng, h, w):
    cy = h // 2 + int(rng.integers(-2, 3))
    cx = w // 2 + int(rng.integers(-2, 3))
    pattern = np.zeros((h, w))
    pattern[max(cy - 1, 0):cy + 1, :] = 1.0
    pattern[:, max(cx - 1, 0):cx + 1] = 1.0
    return pattern


def _corner_blob(rng, h, w):
    corners = [(1.5, 1.5), (1.5, w - 2.5), (h - 2.5, 1.5), (h - 2.5, w - 2.5)]
    center = corners[int(rng.integers(0, 4))]
    return _blob(rng, h, w, center, rng.uniform(0.12, 0.18) * min(h, w))


PATTERNS = (
    lambda rng, h, w: _stripes(rng, h, w, "h"),
    lambda rng, h, w: _stripes(rng, h, w, "v"),
    lambda rng, h, w: _stripes(rng, h, w, "d"),
    lambda rng, h, w: _stripes(rng, h, w, "a"),
    _center_blob,
    _ring,
    _checkerboard,
    _frame,
    _cross,
    _corner_blob,
)


def generate_synthetic(seed: int, count: int, w: int = 16, h: int = 16, c: int = 1,
                       num_classes: int = 10, noise: float = 0.05, contrast: float = 0.2) -> Dataset:
    """
    Generates a balanced, seed-determined dataset of procedural pattern classes.

    Image ``i`` belongs to class ``i % num_classes``; every fifth image of each
    class is tagged for validation. Patterns are drawn around mid-gray, so an
    l-infinity perturbation can move every pixel both ways, with a per-image
    contrast of ``contrast`` +/- 25%.

    Args:
        seed: Global seed; only the ``dataset`` stream is consumed.
        count: Number of images.
        w: Image width (>= 8).
        h: Image height (>= 8).
        c: Channel count.
        num_classes: K, between 2 and 10.
        noise: Standard deviation of the additive Gaussian pixel noise.
        contrast: Mean peak-to-peak pattern amplitude, in (0, 1].

    Returns:
        A Dataset with values in [0, 1].

    Raises:
        ContractError: If a parameter is out of range.
    """
    if not 2 <= num_classes <= MAX_CLASSES:
        raise ContractError(f"num_classes must lie in [2, {MAX_CLASSES}], got {num_classes}")
    if w < 8 or h < 8 or c < 1 or count < 0:
        raise ContractError(f"invalid dataset geometry count={count} h={h} w={w} c={c}")
    if not 0 < contrast <= 1 or noise < 0:
        raise ContractError(f"invalid contrast {contrast} or noise {noise}")

    rng = stream(seed, "dataset")
    images = np.empty((count, h, w, c))
    labels = np.arange(count, dtype=np.int64) % num_classes
    splits = np.where((np.arange(count) // num_classes) % VAL_EVERY == VAL_EVERY - 1, VAL, TRAIN).astype(np.uint8)
    for i, label in enumerate(labels):
        pattern = PATTERNS[label](rng, h, w)
        amplitude = contrast * rng.uniform(0.75, 1.25, size=c)
        image = 0.5 + (pattern[:, :, None] - 0.5) * amplitude + rng.normal(0.0, noise, size=(h, w, c))
        images[i] = np.clip(image, 0.0, 1.0)
    return Dataset(images, labels, splits, num_classes)


class _Reader:
    """Sequential little-endian reader that reports the offset of any truncation."""

    def __init__(self, payload: bytes):
        self.payload = payload
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        end = self.offset + size
        if end > len(self.payload):
            raise FormatError(f"truncated container while reading {what}", self.offset)
        chunk = self.payload[self.offset:end]
        self.offset = end
        return chunk

    def u8(self, what: str) -> int:
        return self.take(1, what)[0]

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def array(self, shape: tuple[int, ...], dtype: str, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        size = math.prod(shape) * dt.itemsize
        if size > len(self.payload) - self.offset:
            raise FormatError(f"{what} of shape {shape} needs {size} bytes, "
                              f"{len(self.payload) - self.offset} remain", self.offset)
        return np.frombuffer(self.take(size, what), dtype=dt).reshape(shape).copy()

    def header(self, payload_kind: int) -> None:
        if self.take(4, "magic") != MAGIC:
            raise FormatError("not an AADV container (bad magic)", 0)
        version = self.u32("version")
        if version != VERSION:
            raise FormatError(f"unsupported container version {version}", 4)
        kind = self.u8("payload kind")
        if kind != payload_kind:
            raise FormatError(f"expected payload kind {payload_kind}, found {kind}", 8)

    def finish(self) -> None:
        if self.offset != len(self.payload):
            raise FormatError(f"{len(self.payload) - self.offset} trailing bytes", self.offset)


def _header(payload_kind: int) -> bytes:
    return MAGIC + struct.pack("<IB", VERSION, payload_kind)


def _write(path: str | Path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(payload)


def model_to_bytes(model: ClassifierModel) -> bytes:
    parts = [_header(PAYLOAD_MODEL), struct.pack("<5I", *model.input_shape, model.num_classes, len(model.layers))]
    for layer in model.layers:
        parts.append(struct.pack("<B", LAYER_KINDS[layer.kind]))
        if layer.kind == "conv":
            parts.append(struct.pack("<2I", layer.stride, layer.padding))
        for name in LAYER_PARAMS[layer.kind]:
            array = np.ascontiguousarray(layer.params[name], dtype="<f8")
            parts.append(struct.pack(f"<B{array.ndim}I", array.ndim, *array.shape))
            parts.append(array.tobytes())
    return b"".join(parts)


def _output_shape(layer: LayerSpec, shape: tuple[int, ...], offset: int) -> tuple[int, ...]:
    """Shape after ``layer`` for an input of ``shape``; (h, w, c) before the first dense layer, (n,) after."""
    if layer.kind == "relu":
        return shape
    if layer.kind == "dense":
        weight, bias = layer.params["weight"].shape, layer.params["bias"].shape
        if len(weight) != 2 or weight[0] != math.prod(shape) or bias != weight[1:]:
            raise FormatError(f"dense layer {weight} with bias {bias} does not fit input {shape}", offset)
        return (weight[1],)
    kernels, bias = layer.params["kernels"].shape, layer.params["bias"].shape
    if len(shape) != 3 or len(kernels) != 4 or kernels[0] != kernels[1] or kernels[2] != shape[2] \
            or bias != kernels[3:]:
        raise FormatError(f"conv layer {kernels} with bias {bias} does not fit input {shape}", offset)
    if layer.stride < 1:
        raise FormatError(f"conv stride must be >= 1, got {layer.stride}", offset)
    h, w = (shape[0] + 2 * layer.padding, shape[1] + 2 * layer.padding)
    if min(h, w) < kernels[0]:
        raise FormatError(f"padded input {(h, w)} smaller than kernel {kernels[0]}x{kernels[0]}", offset)
    return ((h - kernels[0]) // layer.stride + 1, (w - kernels[0]) // layer.stride + 1, kernels[3])


def model_from_bytes(payload: bytes) -> ClassifierModel:
    """
    Parses a model container and checks that its layers map the input shape to K logits.

    Raises:
        FormatError: With the byte offset of the offending field or layer.
    """
    reader = _Reader(payload)
    reader.header(PAYLOAD_MODEL)
    h, w, c = reader.u32("height"), reader.u32("width"), reader.u32("channels")
    num_classes = reader.u32("class count")
    if min(h, w, c) < 1 or num_classes < 2:
        raise FormatError(f"invalid model geometry {(h, w, c)} with {num_classes} classes", 9)
    shape, start = (h, w, c), reader.offset
    layers = []
    for index in range(reader.u32("layer count")):
        start = reader.offset
        code = reader.u8(f"layer {index} kind")
        if code not in _KIND_NAMES:
            raise FormatError(f"unknown layer kind {code}", start)
        kind = _KIND_NAMES[code]
        stride, padding = (reader.u32("stride"), reader.u32("padding")) if kind == "conv" else (1, 0)
        params = {}
        for name in LAYER_PARAMS[kind]:
            ndim = reader.u8(f"{name} rank")
            dims = tuple(reader.u32(f"{name} dims") for _ in range(ndim))
            params[name] = reader.array(dims, "<f8", f"layer {index} {name}").astype(np.float64)
        layer = LayerSpec(kind, params, stride, padding)
        shape = _output_shape(layer, shape, start)
        layers.append(layer)
    reader.finish()
    if shape != (num_classes,):
        raise FormatError(f"layers produce shape {shape}, expected ({num_classes},)", start)
    return ClassifierModel((h, w, c), num_classes, layers).freeze()


def save_model(model: ClassifierModel, path: str | Path) -> None:
    _write(path, model_to_bytes(model))
    logger.info("saved model %s to %s", model.checksum()[:12], path)


def load_model(path: str | Path) -> ClassifierModel:
    """
    Reads a model container.

    Raises:
        FileNotFoundError: If the file does not exist.
        FormatError: If the file is malformed or truncated.
    """
    return model_from_bytes(Path(path).read_bytes())


def dataset_to_bytes(dataset: Dataset) -> bytes:
    n = len(dataset)
    h, w, c = dataset.images.shape[1:]
    return b"".join([
        _header(PAYLOAD_DATASET),
        struct.pack("<5I", n, h, w, c, dataset.num_classes),
        np.ascontiguousarray(dataset.labels, dtype="<u4").tobytes(),
        np.ascontiguousarray(dataset.splits, dtype="u1").tobytes(),
        np.ascontiguousarray(dataset.images, dtype="<f8").tobytes(),
    ])


def dataset_from_bytes(payload: bytes) -> Dataset:
    reader = _Reader(payload)
    reader.header(PAYLOAD_DATASET)
    n, h, w, c, num_classes = (reader.u32(what) for what in ("count", "height", "width", "channels", "classes"))
    if min(h, w, c) < 1 or num_classes < 2:
        raise FormatError(f"invalid dataset geometry {(h, w, c)} with {num_classes} classes", 13)
    labels = reader.array((n,), "<u4", "labels").astype(np.int64)
    splits = reader.array((n,), "u1", "splits")
    images = reader.array((n, h, w, c), "<f8", "images").astype(np.float64)
    reader.finish()
    if np.any(labels >= num_classes) or np.any(splits > VAL):
        raise FormatError("labels or split tags out of range")
    if images.size and (images.min() < 0.0 or images.max() > 1.0):
        raise FormatError("pixel values outside [0, 1]")
    return Dataset(images, labels, splits, num_classes)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    _write(path, dataset_to_bytes(dataset))


def load_dataset(path: str | Path) -> Dataset:
    return dataset_from_bytes(Path(path).read_bytes())
