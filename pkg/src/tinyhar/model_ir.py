"""Layer-graph model representation: layer specs, the two network builders,
parameter accounting, and size estimates.

A model is a plain ordered list of layers. There is no general computation
graph: the only supported topologies are the conv->pool->dense classifier
(``build_mc_cnn``) and the stacked conv + LSTM classifier
(``build_deep_conv_lstm``).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np


class GraphError(ValueError):
    """Malformed layer graph."""


class ShapeUnderflowError(GraphError):
    """Valid convolutions / pooling exhausted the time axis."""


class DivisibilityError(GraphError):
    """A structural divisibility constraint (e.g. the 4:1 filter ratio) failed."""


class ShapeMismatchError(GraphError):
    """Adjacent layers or tensors disagree on shape."""


class LayerKind(Enum):
    CONV1D = 0
    RELU = 1
    DROPOUT = 2
    AVGPOOL1D = 3
    DENSE = 4
    LSTM = 5
    SOFTMAX = 6
    FLATTEN = 7


class Precision(Enum):
    FLOAT32 = 0
    INT8_FULL = 1


@dataclass(frozen=True)
class LayerSpec:
    """One layer. Only the attributes relevant to ``kind`` are meaningful."""

    kind: LayerKind
    in_channels: int = 0
    out_filters: int = 0
    kernel: int = 0
    pool: int = 0
    in_dim: int = 0
    out_dim: int = 0
    hidden: int = 0
    rate: float = 0.0


def conv1d(in_channels: int, out_filters: int, kernel: int) -> LayerSpec:
    if kernel < 1 or out_filters < 1 or in_channels < 1:
        raise GraphError(f"conv1d needs positive dims, got "
                         f"({in_channels}, {out_filters}, {kernel})")
    return LayerSpec(LayerKind.CONV1D, in_channels=in_channels,
                     out_filters=out_filters, kernel=kernel)


def relu() -> LayerSpec:
    return LayerSpec(LayerKind.RELU)


def dropout(rate: float) -> LayerSpec:
    if not 0.0 <= rate < 1.0:
        raise GraphError(f"dropout rate must be in [0, 1), got {rate}")
    return LayerSpec(LayerKind.DROPOUT, rate=rate)


def avg_pool1d(pool: int) -> LayerSpec:
    if pool < 1:
        raise GraphError(f"pool width must be >= 1, got {pool}")
    return LayerSpec(LayerKind.AVGPOOL1D, pool=pool)


def dense(in_dim: int, out_dim: int) -> LayerSpec:
    return LayerSpec(LayerKind.DENSE, in_dim=in_dim, out_dim=out_dim)


def lstm(in_dim: int, hidden: int) -> LayerSpec:
    if hidden < 1:
        raise GraphError(f"hidden size must be >= 1, got {hidden}")
    return LayerSpec(LayerKind.LSTM, in_dim=in_dim, hidden=hidden)


def softmax() -> LayerSpec:
    return LayerSpec(LayerKind.SOFTMAX)


def flatten() -> LayerSpec:
    return LayerSpec(LayerKind.FLATTEN)


def layer_output_shape(spec: LayerSpec, shape: tuple[int, ...]) -> tuple[int, ...]:
    """Shape produced by one layer given its input shape.

    2D shapes are (time_steps, channels); 1D shapes are flat feature vectors.
    A Dense layer fed a sequence consumes the final time step.
    """
    kind = spec.kind
    if kind == LayerKind.CONV1D:
        if len(shape) != 2:
            raise ShapeMismatchError(f"conv1d needs a 2D input, got {shape}")
        steps, channels = shape
        if channels != spec.in_channels:
            raise ShapeMismatchError(
                f"conv1d expects {spec.in_channels} channels, got {channels}")
        out_steps = steps - spec.kernel + 1
        if out_steps < 1:
            raise ShapeUnderflowError(
                f"kernel {spec.kernel} exhausts {steps} time steps")
        return (out_steps, spec.out_filters)
    if kind == LayerKind.AVGPOOL1D:
        if len(shape) != 2:
            raise ShapeMismatchError(f"avg_pool1d needs a 2D input, got {shape}")
        out_steps = shape[0] // spec.pool
        if out_steps < 1:
            raise ShapeUnderflowError(
                f"pool {spec.pool} exhausts {shape[0]} time steps")
        return (out_steps, shape[1])
    if kind == LayerKind.FLATTEN:
        return (int(np.prod(shape)),)
    if kind == LayerKind.DENSE:
        if len(shape) == 1:
            in_dim = shape[0]
        else:
            in_dim = shape[1]  # sequence input: dense sees the last time step
        if in_dim != spec.in_dim:
            raise ShapeMismatchError(
                f"dense expects {spec.in_dim} inputs, got {in_dim}")
        return (spec.out_dim,)
    if kind == LayerKind.LSTM:
        if len(shape) != 2:
            raise ShapeMismatchError(f"lstm needs a 2D input, got {shape}")
        if shape[1] != spec.in_dim:
            raise ShapeMismatchError(
                f"lstm expects {spec.in_dim} inputs, got {shape[1]}")
        return (shape[0], spec.hidden)
    # RELU / DROPOUT / SOFTMAX are shape-preserving
    return shape


def output_shapes(layers: tuple[LayerSpec, ...],
                  input_shape: tuple[int, int]) -> list[tuple[int, ...]]:
    """Per-layer output shapes, validating shape compatibility along the way."""
    shapes = []
    shape: tuple[int, ...] = input_shape
    for spec in layers:
        shape = layer_output_shape(spec, shape)
        shapes.append(shape)
    return shapes


# LSTM gate order throughout: input, forget, candidate, output.
_PARAM_KEYS = {
    LayerKind.CONV1D: ("w", "b"),
    LayerKind.DENSE: ("w", "b"),
    LayerKind.LSTM: ("w_x", "w_h", "b"),
}


def param_shapes(spec: LayerSpec) -> dict[str, tuple[int, ...]]:
    if spec.kind == LayerKind.CONV1D:
        return {"w": (spec.in_channels, spec.kernel, spec.out_filters),
                "b": (spec.out_filters,)}
    if spec.kind == LayerKind.DENSE:
        return {"w": (spec.in_dim, spec.out_dim), "b": (spec.out_dim,)}
    if spec.kind == LayerKind.LSTM:
        return {"w_x": (spec.in_dim, 4 * spec.hidden),
                "w_h": (spec.hidden, 4 * spec.hidden),
                "b": (4 * spec.hidden,)}
    return {}


def init_params(layers: tuple[LayerSpec, ...], seed: int) -> tuple[dict, ...]:
    """Uniform fan-in scaled initialization (He-style bound), zero biases."""
    rng = np.random.default_rng(seed)
    params = []
    for spec in layers:
        shapes = param_shapes(spec)
        layer_params: dict[str, np.ndarray] = {}
        for name, shape in shapes.items():
            if name.startswith("b"):
                layer_params[name] = np.zeros(shape, dtype=np.float32)
            else:
                if spec.kind == LayerKind.CONV1D:
                    fan_in = spec.in_channels * spec.kernel
                elif spec.kind == LayerKind.DENSE:
                    fan_in = spec.in_dim
                else:  # LSTM
                    fan_in = shape[0]
                limit = math.sqrt(6.0 / fan_in)
                layer_params[name] = rng.uniform(
                    -limit, limit, size=shape).astype(np.float32)
        params.append(layer_params)
    return tuple(params)


@dataclass(frozen=True)
class ModelGraph:
    """Immutable layer list plus float parameters.

    Parameter arrays are frozen (non-writeable) so a graph can be shared
    read-only across concurrent executors.
    """

    layers: tuple[LayerSpec, ...]
    params: tuple[dict[str, np.ndarray], ...]
    input_shape: tuple[int, int]
    num_classes: int

    def __post_init__(self):
        if len(self.layers) != len(self.params):
            raise GraphError("one param dict per layer required")
        shapes = output_shapes(self.layers, self.input_shape)
        if not self.layers or self.layers[-1].kind != LayerKind.SOFTMAX:
            raise GraphError("last layer must be softmax")
        if shapes[-1] != (self.num_classes,):
            raise GraphError(
                f"softmax input width {shapes[-1]} != num_classes {self.num_classes}")
        for spec, layer_params in zip(self.layers, self.params):
            expected = param_shapes(spec)
            if set(expected) != set(layer_params):
                raise GraphError(
                    f"layer {spec.kind.name} expects params {sorted(expected)}, "
                    f"got {sorted(layer_params)}")
            for name, shape in expected.items():
                arr = layer_params[name]
                if tuple(arr.shape) != shape:
                    raise ShapeMismatchError(
                        f"{spec.kind.name}.{name} has shape {arr.shape}, "
                        f"expected {shape}")
                arr.flags.writeable = False

    def layer_output_shapes(self) -> list[tuple[int, ...]]:
        return output_shapes(self.layers, self.input_shape)

    def with_params(self, params: tuple[dict[str, np.ndarray], ...]) -> "ModelGraph":
        return ModelGraph(self.layers, params, self.input_shape, self.num_classes)


def build_mc_cnn(channels: int, window_len: int, first_filters: int = 128,
                 kernel: int = 3, dense_width: int = 128, num_classes: int = 15,
                 dropout_rate: float = 0.2, pool: int = 2,
                 seed: int = 0) -> ModelGraph:
    """Two-conv classifier with a 4:1 filter ratio between the conv layers."""
    if first_filters % 4 != 0:
        raise DivisibilityError(
            f"first conv filter count must be divisible by 4, got {first_filters}")
    layers = [
        conv1d(channels, first_filters, kernel),
        relu(),
        conv1d(first_filters, first_filters // 4, kernel),
        relu(),
        dropout(dropout_rate),
        avg_pool1d(pool),
        flatten(),
    ]
    shapes = output_shapes(tuple(layers), (window_len, channels))
    flat_dim = shapes[-1][0]
    layers += [
        dense(flat_dim, dense_width),
        relu(),
        dense(dense_width, num_classes),
        softmax(),
    ]
    layers_t = tuple(layers)
    return ModelGraph(layers_t, init_params(layers_t, seed),
                      (window_len, channels), num_classes)


def build_deep_conv_lstm(channels: int, window_len: int, filters: int = 32,
                         hidden: int = 128, kernel: int = 3,
                         num_classes: int = 15, seed: int = 0) -> ModelGraph:
    """Four uniform conv layers followed by two stacked LSTM layers."""
    layers: list[LayerSpec] = []
    in_ch = channels
    for _ in range(4):
        layers.append(conv1d(in_ch, filters, kernel))
        layers.append(relu())
        in_ch = filters
    layers += [
        lstm(filters, hidden),
        lstm(hidden, hidden),
        dense(hidden, num_classes),
        softmax(),
    ]
    layers_t = tuple(layers)
    # validates shape survival through the four convolutions
    output_shapes(layers_t, (window_len, channels))
    return ModelGraph(layers_t, init_params(layers_t, seed),
                      (window_len, channels), num_classes)


def layer_param_count(spec: LayerSpec) -> int:
    if spec.kind == LayerKind.CONV1D:
        return spec.in_channels * spec.kernel * spec.out_filters + spec.out_filters
    if spec.kind == LayerKind.DENSE:
        return spec.in_dim * spec.out_dim + spec.out_dim
    if spec.kind == LayerKind.LSTM:
        return 4 * (spec.in_dim * spec.hidden + spec.hidden * spec.hidden
                    + spec.hidden)
    return 0


def param_count(graph: ModelGraph) -> tuple[list[int], int]:
    """Per-layer parameter counts and their total."""
    counts = [layer_param_count(spec) for spec in graph.layers]
    return counts, sum(counts)


def bias_count(graph: ModelGraph) -> int:
    total = 0
    for spec in graph.layers:
        if spec.kind in (LayerKind.CONV1D, LayerKind.DENSE):
            total += spec.out_filters if spec.kind == LayerKind.CONV1D else spec.out_dim
        elif spec.kind == LayerKind.LSTM:
            total += 4 * spec.hidden
    return total


# serialized bookkeeping per quantized tensor: scale (f64) + zero point (i32)
QPARAM_BYTES = 12


def model_size_bytes(graph: ModelGraph, precision: Precision,
                     overhead: int = 0) -> int:
    """Analytic serialized-size estimate.

    Float32 stores every parameter in 4 bytes. Int8Full stores weights in 1
    byte, biases in 4 (int32), plus per-tensor quantization bookkeeping.
    """
    _, total = param_count(graph)
    if precision == Precision.FLOAT32:
        return 4 * total + overhead
    biases = bias_count(graph)
    n_qtensors = sum(len(param_shapes(s)) + 1 for s in graph.layers
                     if s.kind in _PARAM_KEYS)
    return (total - biases) + 4 * biases + QPARAM_BYTES * n_qtensors + overhead
