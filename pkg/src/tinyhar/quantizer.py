"""Full-integer 8-bit post-training quantization.

Activation ranges are calibrated by running the float executor over a
representative dataset and recording exact per-tensor (min, max), widened to
include zero so that real 0 is always exactly representable. Weights are
quantized symmetrically per tensor (zero point 0), activations asymmetrically.
Biases become int32 at scale s_in * s_w. Each requantizing layer carries a
fixed-point multiplier decomposition of its real rescale factor.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import frexp

import numpy as np

from . import float_engine
from .model_ir import LayerKind, ModelGraph, Precision

# fixed output coding for the final softmax: probabilities in [0, 1)
SOFTMAX_SCALE = 1.0 / 256.0
SOFTMAX_ZERO_POINT = -128

DEGENERATE_SCALE = 1e-8  # substitute for zero-width calibration ranges


class EmptyDatasetError(ValueError):
    """Representative dataset was empty."""


class NonPositiveMultiplierError(ValueError):
    """Requantization multiplier must be > 0."""


@dataclass(frozen=True)
class QuantParams:
    scale: float
    zero_point: int

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not -128 <= self.zero_point <= 127:
            raise ValueError(f"zero_point out of int8 range: {self.zero_point}")


@dataclass(frozen=True)
class FixedPointMultiplier:
    """Real multiplier m encoded as mantissa * 2**(exponent - 31),
    mantissa in [2**30, 2**31)."""

    mantissa: int
    exponent: int

    @property
    def value(self) -> float:
        return self.mantissa * 2.0 ** (self.exponent - 31)


def affine_params(lo: float, hi: float) -> QuantParams:
    """Asymmetric int8 parameters for an activation range (widened to 0)."""
    lo = min(lo, 0.0)
    hi = max(hi, 0.0)
    scale = (hi - lo) / 255.0
    if scale <= 0.0:  # empty range, or so narrow the division underflows
        return QuantParams(DEGENERATE_SCALE, -128)
    zero_point = int(round(-128 - lo / scale))
    zero_point = max(-128, min(127, zero_point))
    return QuantParams(scale, zero_point)


def symmetric_params(lo: float, hi: float) -> QuantParams:
    """Symmetric int8 parameters (zero point 0), used for weights."""
    bound = max(abs(lo), abs(hi))
    scale = bound / 127.0
    if scale <= 0.0:  # all-zero tensor, or subnormal underflow
        return QuantParams(DEGENERATE_SCALE, 0)
    return QuantParams(scale, 0)


def quantize_tensor(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    q = np.round(np.asarray(x, dtype=np.float64) / qp.scale) + qp.zero_point
    return np.clip(q, -128, 127).astype(np.int8)


def dequantize(q: np.ndarray, qp: QuantParams) -> np.ndarray:
    return (np.asarray(q, dtype=np.float64) - qp.zero_point) * qp.scale


def decompose_multiplier(m: float) -> FixedPointMultiplier:
    if not m > 0:
        raise NonPositiveMultiplierError(f"multiplier must be > 0, got {m}")
    frac, exp = frexp(m)  # m = frac * 2**exp, frac in [0.5, 1)
    mantissa = int(round(frac * (1 << 31)))
    if mantissa == 1 << 31:  # rounding carried over; renormalize
        mantissa >>= 1
        exp += 1
    return FixedPointMultiplier(mantissa, exp)


def calibrate(graph: ModelGraph, representative_set) -> list[tuple[float, float]]:
    """Per-activation (min, max) over the representative set.

    Index 0 is the model input; index i+1 is layer i's output. Every range
    is widened to include 0.
    """
    ranges: list[tuple[float, float]] | None = None
    count = 0
    for window in representative_set:
        acts = float_engine.forward_collect(graph, np.asarray(window))
        if ranges is None:
            ranges = [(float(a.min()), float(a.max())) for a in acts]
        else:
            ranges = [(min(lo, float(a.min())), max(hi, float(a.max())))
                      for (lo, hi), a in zip(ranges, acts)]
        count += 1
    if count == 0:
        raise EmptyDatasetError("representative dataset is empty")
    return [(min(lo, 0.0), max(hi, 0.0)) for lo, hi in ranges]


@dataclass
class QLayer:
    """One quantized layer: the structural spec plus integer parameters."""

    spec: object  # LayerSpec
    in_qp: QuantParams
    out_qp: QuantParams
    weights: dict | None = None       # name -> int8 ndarray
    weight_qps: dict | None = None    # name -> QuantParams
    bias: np.ndarray | None = None    # int32
    multiplier: FixedPointMultiplier | None = None


@dataclass
class QuantizedModel:
    layers: list[QLayer]
    input_shape: tuple[int, int]
    num_classes: int
    input_qp: QuantParams


def _activation_qps(graph: ModelGraph,
                    ranges: list[tuple[float, float]]) -> list[QuantParams]:
    """Quantization params for [input, out_0, ..., out_last].

    Pool / dropout / flatten reuse their input coding; the final softmax
    output is pinned to (1/256, -128).
    """
    qps = [affine_params(*ranges[0])]
    for i, spec in enumerate(graph.layers):
        if spec.kind in (LayerKind.AVGPOOL1D, LayerKind.DROPOUT,
                         LayerKind.FLATTEN):
            qps.append(qps[-1])
        elif spec.kind == LayerKind.SOFTMAX:
            qps.append(QuantParams(SOFTMAX_SCALE, SOFTMAX_ZERO_POINT))
        else:
            qps.append(affine_params(*ranges[i + 1]))
    return qps


def quantize_model(graph: ModelGraph, representative_set) -> QuantizedModel:
    """Convert a trained float graph to a fully int8 model."""
    ranges = calibrate(graph, representative_set)
    act_qps = _activation_qps(graph, ranges)
    qlayers: list[QLayer] = []
    for i, (spec, layer_params) in enumerate(zip(graph.layers, graph.params)):
        in_qp, out_qp = act_qps[i], act_qps[i + 1]
        ql = QLayer(spec=spec, in_qp=in_qp, out_qp=out_qp)
        if spec.kind in (LayerKind.CONV1D, LayerKind.DENSE):
            w = layer_params["w"]
            w_qp = symmetric_params(float(w.min()), float(w.max()))
            ql.weights = {"w": quantize_tensor(w, w_qp)}
            ql.weight_qps = {"w": w_qp}
            bias_scale = in_qp.scale * w_qp.scale
            ql.bias = np.round(
                layer_params["b"].astype(np.float64) / bias_scale
            ).astype(np.int32)
            ql.multiplier = decompose_multiplier(bias_scale / out_qp.scale)
        elif spec.kind == LayerKind.LSTM:
            # hybrid execution: int8 storage, float cell math
            ql.weights, ql.weight_qps = {}, {}
            for name in ("w_x", "w_h"):
                w = layer_params[name]
                w_qp = symmetric_params(float(w.min()), float(w.max()))
                ql.weights[name] = quantize_tensor(w, w_qp)
                ql.weight_qps[name] = w_qp
            bias_scale = in_qp.scale * ql.weight_qps["w_x"].scale
            ql.bias = np.round(
                layer_params["b"].astype(np.float64) / bias_scale
            ).astype(np.int32)
            ql.multiplier = decompose_multiplier(bias_scale / out_qp.scale)
        elif spec.kind == LayerKind.RELU:
            ql.multiplier = decompose_multiplier(in_qp.scale / out_qp.scale)
        qlayers.append(ql)
    return QuantizedModel(layers=qlayers, input_shape=graph.input_shape,
                          num_classes=graph.num_classes, input_qp=act_qps[0])


def quantized_param_count(model: QuantizedModel) -> int:
    total = 0
    for ql in model.layers:
        if ql.weights:
            total += sum(int(w.size) for w in ql.weights.values())
        if ql.bias is not None:
            total += int(ql.bias.size)
    return total
