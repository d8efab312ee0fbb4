"""Integer-only inference executor for quantized models.

Conv/dense layers accumulate int8 x int8 products into 32-bit integers,
add int32 biases, and requantize through a fixed-point multiplier with
round-half-away-from-zero rounding. The accumulation matmul is performed in
float64, which is exact for these magnitudes (|acc| << 2**53) and keeps the
path bit-reproducible across platforms. The LSTM executes hybrid: int8
storage, float cell math, requantized output.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import float_engine
from .model_ir import LayerKind, ShapeMismatchError
from .quantizer import (FixedPointMultiplier, QuantParams, QuantizedModel,
                        dequantize, quantize_tensor)


@dataclass
class SaturationAudit:
    """Counts values clamped at the int8 rails during requantization."""

    clamped: int = 0
    total: int = 0


def _round_half_away_div(num: np.ndarray, den: int) -> np.ndarray:
    """Integer division rounding half away from zero (num int64, den > 0)."""
    sign = np.sign(num)
    return sign * ((np.abs(num) + den // 2) // den)


def requantize(acc: np.ndarray, mult: FixedPointMultiplier) -> np.ndarray:
    """Scale an int32/int64 accumulator by mantissa * 2**(exponent - 31)."""
    prod = acc.astype(np.int64) * mult.mantissa
    shift = 31 - mult.exponent
    if shift <= 0:
        return prod << (-shift)
    half = np.int64(1) << (shift - 1)
    # round half away from zero: shift the magnitude, restore the sign
    return np.sign(prod) * ((np.abs(prod) + half) >> shift)


def _saturate(values: np.ndarray, audit: SaturationAudit | None) -> np.ndarray:
    clipped = np.clip(values, -128, 127)
    if audit is not None:
        audit.total += values.size
        audit.clamped += int((values != clipped).sum())
    return clipped.astype(np.int8)


def _int_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # exact integer matmul via float64 BLAS; inputs are small integers
    return np.rint(a.astype(np.float64) @ b.astype(np.float64)).astype(np.int64)


def conv1d_int8(q_in: np.ndarray, in_qp: QuantParams, q_w: np.ndarray,
                bias: np.ndarray, mult: FixedPointMultiplier,
                out_qp: QuantParams,
                audit: SaturationAudit | None = None) -> np.ndarray:
    """q_in: (T, C) int8; q_w: (C, K, F) int8; bias: (F,) int32."""
    steps, channels = q_in.shape
    in_channels, kernel, filters = q_w.shape
    if channels != in_channels:
        raise ShapeMismatchError(
            f"input has {channels} channels, weights expect {in_channels}")
    if steps < kernel:
        raise ShapeMismatchError(
            f"input has {steps} steps, kernel needs {kernel}")
    out_steps = steps - kernel + 1
    centered = q_in.astype(np.int64) - in_qp.zero_point
    w2 = np.ascontiguousarray(q_w.transpose(1, 0, 2)).reshape(
        kernel * in_channels, filters)
    cols = np.empty((out_steps, kernel * in_channels), dtype=np.int64)
    for k in range(kernel):
        cols[:, k * in_channels:(k + 1) * in_channels] = \
            centered[k:k + out_steps]
    acc = _int_matmul(cols, w2) + bias.astype(np.int64)
    return _saturate(requantize(acc, mult) + out_qp.zero_point, audit)


def dense_int8(q_in: np.ndarray, in_qp: QuantParams, q_w: np.ndarray,
               bias: np.ndarray, mult: FixedPointMultiplier,
               out_qp: QuantParams,
               audit: SaturationAudit | None = None) -> np.ndarray:
    """q_in: (D,) int8; q_w: (D, O) int8; bias: (O,) int32."""
    if q_in.shape[0] != q_w.shape[0]:
        raise ShapeMismatchError(
            f"dense input width {q_in.shape[0]} != weight rows {q_w.shape[0]}")
    centered = q_in.astype(np.int64) - in_qp.zero_point
    acc = _int_matmul(centered[None, :], q_w)[0] + bias.astype(np.int64)
    return _saturate(requantize(acc, mult) + out_qp.zero_point, audit)


def relu_int8(q_in: np.ndarray, in_qp: QuantParams,
              mult: FixedPointMultiplier, out_qp: QuantParams,
              audit: SaturationAudit | None = None) -> np.ndarray:
    clipped = np.maximum(q_in.astype(np.int64), in_qp.zero_point)
    rescaled = requantize(clipped - in_qp.zero_point, mult) + out_qp.zero_point
    return _saturate(rescaled, audit)


def avg_pool1d_int8(q_in: np.ndarray, pool: int) -> np.ndarray:
    """Integer sum then rounded division; quantization params unchanged."""
    if q_in.ndim != 2:
        raise ShapeMismatchError(f"avg_pool1d needs a 2D input, got {q_in.shape}")
    out_steps = q_in.shape[0] // pool
    if out_steps < 1:
        raise ShapeMismatchError(
            f"pool {pool} exhausts {q_in.shape[0]} time steps")
    sums = q_in[:out_steps * pool].astype(np.int64).reshape(
        out_steps, pool, q_in.shape[1]).sum(axis=1)
    return _round_half_away_div(sums, pool).astype(np.int8)


def lstm_hybrid(q_in: np.ndarray, in_qp: QuantParams, weights: dict,
                weight_qps: dict, bias: np.ndarray, bias_scale: float,
                out_qp: QuantParams) -> np.ndarray:
    """Dequantize, run the float LSTM cell, requantize to the calibrated
    output range."""
    x = dequantize(q_in, in_qp)
    w_x = dequantize(weights["w_x"], weight_qps["w_x"])
    w_h = dequantize(weights["w_h"], weight_qps["w_h"])
    b = bias.astype(np.float64) * bias_scale
    h = float_engine.lstm_forward(x, w_x, w_h, b)
    return quantize_tensor(h, out_qp)


def softmax_int8(q_logits: np.ndarray, in_qp: QuantParams,
                 out_qp: QuantParams) -> np.ndarray:
    probs = float_engine.softmax(dequantize(q_logits, in_qp))
    return quantize_tensor(probs, out_qp)


def run_layers(model: QuantizedModel, q_value: np.ndarray,
               audit: SaturationAudit | None = None) -> np.ndarray:
    for ql in model.layers:
        kind = ql.spec.kind
        if kind == LayerKind.CONV1D:
            q_value = conv1d_int8(q_value, ql.in_qp, ql.weights["w"],
                                  ql.bias, ql.multiplier, ql.out_qp, audit)
        elif kind == LayerKind.RELU:
            q_value = relu_int8(q_value, ql.in_qp, ql.multiplier,
                                ql.out_qp, audit)
        elif kind == LayerKind.DROPOUT:
            pass  # identity at inference
        elif kind == LayerKind.AVGPOOL1D:
            q_value = avg_pool1d_int8(q_value, ql.spec.pool)
        elif kind == LayerKind.FLATTEN:
            q_value = q_value.reshape(-1)
        elif kind == LayerKind.DENSE:
            vec = q_value[-1] if q_value.ndim == 2 else q_value
            q_value = dense_int8(vec, ql.in_qp, ql.weights["w"], ql.bias,
                                 ql.multiplier, ql.out_qp, audit)
        elif kind == LayerKind.LSTM:
            bias_scale = ql.in_qp.scale * ql.weight_qps["w_x"].scale
            q_value = lstm_hybrid(q_value, ql.in_qp, ql.weights,
                                  ql.weight_qps, ql.bias, bias_scale,
                                  ql.out_qp)
        elif kind == LayerKind.SOFTMAX:
            q_value = softmax_int8(q_value, ql.in_qp, ql.out_qp)
    return q_value


def run_quantized(model: QuantizedModel, window: np.ndarray,
                  audit: SaturationAudit | None = None):
    """Integer inference on one real-valued window.

    Returns (probability vector, predicted class); argmax ties break toward
    the lowest class index.
    """
    if tuple(window.shape) != model.input_shape:
        raise ShapeMismatchError(
            f"window shape {window.shape} != model input {model.input_shape}")
    q_value = quantize_tensor(window, model.input_qp)
    q_out = run_layers(model, q_value, audit)
    out_qp = model.layers[-1].out_qp
    probs = dequantize(q_out, out_qp)
    return probs, int(np.argmax(probs))


@dataclass(frozen=True)
class LatencyStats:
    mean_us: float
    p50_us: float
    p95_us: float
    samples: tuple[float, ...] = field(repr=False, default=())


def timed_inference(model, window: np.ndarray, repetitions: int,
                    warmup: int = 3) -> LatencyStats:
    """Wall-clock latency of the inference call only (input prep excluded).

    ``model`` may be a QuantizedModel or a float ModelGraph; warm-up runs
    are discarded.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    if isinstance(model, QuantizedModel):
        q_input = quantize_tensor(window, model.input_qp)

        def call():
            run_layers(model, q_input)
    else:
        def call():
            float_engine.forward(model, window)

    for _ in range(warmup):
        call()
    samples = []
    for _ in range(repetitions):
        start = time.perf_counter_ns()
        call()
        samples.append((time.perf_counter_ns() - start) / 1000.0)
    arr = np.array(samples)
    return LatencyStats(mean_us=float(arr.mean()),
                        p50_us=float(np.percentile(arr, 50)),
                        p95_us=float(np.percentile(arr, 95)),
                        samples=tuple(samples))
