"""Backprop trainer for the conv/dense model family.

Batched forward/backward kernels (float64), Adam and SGD optimizers,
categorical cross-entropy loss, and a central finite-difference gradient
checker. LSTM graphs are out of scope: they are supported for inference,
quantization and benchmarking only.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .model_ir import LayerKind, ModelGraph


class UnsupportedLayerError(ValueError):
    """Graph contains a layer the trainer cannot differentiate (LSTM)."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    seed: int = 0
    optimizer: str = "adam"  # "adam" | "sgd"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.learning_rate < 1.0:
            raise ValueError("learning_rate must be in (0, 1)")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


_TRAINABLE = (LayerKind.CONV1D, LayerKind.RELU, LayerKind.DROPOUT,
              LayerKind.AVGPOOL1D, LayerKind.FLATTEN, LayerKind.DENSE,
              LayerKind.SOFTMAX)


def _check_trainable(graph: ModelGraph) -> None:
    for spec in graph.layers:
        if spec.kind not in _TRAINABLE:
            raise UnsupportedLayerError(
                f"trainer does not support {spec.kind.name} layers")


def _im2col(x: np.ndarray, kernel: int) -> np.ndarray:
    # (N, T, C) -> (N, T_out, kernel * C), window rows in (k, c) order
    out_steps = x.shape[1] - kernel + 1
    cols = np.stack([x[:, k:k + out_steps, :] for k in range(kernel)], axis=2)
    return cols.reshape(x.shape[0], out_steps, kernel * x.shape[2])


def _forward_batch(graph: ModelGraph, params, x: np.ndarray, *,
                   train: bool, rng: np.random.Generator | None):
    """Returns (logits, caches). ``x`` is (N, T, C)."""
    caches = []
    value = x
    for spec, layer_params in zip(graph.layers, params):
        kind = spec.kind
        if kind == LayerKind.CONV1D:
            w, b = layer_params["w"], layer_params["b"]
            w2 = w.transpose(1, 0, 2).reshape(spec.kernel * spec.in_channels, -1)
            cols = _im2col(value, spec.kernel)
            out = cols @ w2 + b
            caches.append(("conv", cols, w2, value.shape))
            value = out
        elif kind == LayerKind.RELU:
            mask = value > 0
            caches.append(("relu", mask))
            value = value * mask
        elif kind == LayerKind.DROPOUT:
            if train and spec.rate > 0.0:
                keep = rng.random(value.shape) >= spec.rate
                scale = 1.0 / (1.0 - spec.rate)
                caches.append(("dropout", keep, scale))
                value = value * keep * scale
            else:
                caches.append(("identity",))
        elif kind == LayerKind.AVGPOOL1D:
            n, steps, ch = value.shape
            out_steps = steps // spec.pool
            kept = value[:, :out_steps * spec.pool].reshape(
                n, out_steps, spec.pool, ch)
            caches.append(("pool", value.shape, spec.pool, out_steps))
            value = kept.mean(axis=2)
        elif kind == LayerKind.FLATTEN:
            caches.append(("flatten", value.shape))
            value = value.reshape(value.shape[0], -1)
        elif kind == LayerKind.DENSE:
            w, b = layer_params["w"], layer_params["b"]
            caches.append(("dense", value))
            value = value @ w + b
        elif kind == LayerKind.SOFTMAX:
            caches.append(("softmax",))
            # handled jointly with the loss; value stays as logits
    return value, caches


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _loss_and_dlogits(logits: np.ndarray, labels: np.ndarray):
    n = logits.shape[0]
    logp = _log_softmax(logits)
    loss = -logp[np.arange(n), labels].mean()
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    return loss, dlogits / n


def _backward_batch(graph: ModelGraph, params, caches, dlogits: np.ndarray):
    """Returns per-layer gradient dicts mirroring ``params``."""
    grads = [dict() for _ in graph.layers]
    dvalue = dlogits
    for idx in range(len(graph.layers) - 1, -1, -1):
        cache = caches[idx]
        tag = cache[0]
        if tag == "softmax":
            continue  # folded into the loss gradient
        if tag == "dense":
            x = cache[1]
            w = params[idx]["w"]
            grads[idx]["w"] = x.T @ dvalue
            grads[idx]["b"] = dvalue.sum(axis=0)
            dvalue = dvalue @ w.T
        elif tag == "flatten":
            dvalue = dvalue.reshape(cache[1])
        elif tag == "pool":
            in_shape, pool, out_steps = cache[1], cache[2], cache[3]
            dx = np.zeros(in_shape)
            spread = np.repeat(dvalue / pool, pool, axis=1)
            dx[:, :out_steps * pool] = spread
            dvalue = dx
        elif tag == "dropout":
            keep, scale = cache[1], cache[2]
            dvalue = dvalue * keep * scale
        elif tag == "identity":
            continue
        elif tag == "relu":
            dvalue = dvalue * cache[1]
        elif tag == "conv":
            cols, w2, in_shape = cache[1], cache[2], cache[3]
            spec = graph.layers[idx]
            dw2 = np.einsum("ntk,ntf->kf", cols, dvalue)
            grads[idx]["w"] = dw2.reshape(
                spec.kernel, spec.in_channels, -1).transpose(1, 0, 2)
            grads[idx]["b"] = dvalue.sum(axis=(0, 1))
            dcols = (dvalue @ w2.T).reshape(
                dvalue.shape[0], dvalue.shape[1], spec.kernel, spec.in_channels)
            dx = np.zeros(in_shape)
            out_steps = dvalue.shape[1]
            for k in range(spec.kernel):
                dx[:, k:k + out_steps, :] += dcols[:, :, k, :]
            dvalue = dx
    return grads


class _Adam:
    def __init__(self, lr: float):
        self.lr = lr
        self.beta1, self.beta2, self.eps = 0.9, 0.999, 1e-8
        self.t = 0
        self.m: dict[tuple[int, str], np.ndarray] = {}
        self.v: dict[tuple[int, str], np.ndarray] = {}

    def step(self, params, grads):
        self.t += 1
        for idx, layer_grads in enumerate(grads):
            for name, g in layer_grads.items():
                key = (idx, name)
                if key not in self.m:
                    self.m[key] = np.zeros_like(g)
                    self.v[key] = np.zeros_like(g)
                self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
                self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
                m_hat = self.m[key] / (1 - self.beta1 ** self.t)
                v_hat = self.v[key] / (1 - self.beta2 ** self.t)
                params[idx][name] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params, grads):
        for idx, layer_grads in enumerate(grads):
            for name, g in layer_grads.items():
                params[idx][name] -= self.lr * g


def predict_proba(graph: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Batched class probabilities (inference mode, float64)."""
    _check_trainable(graph)
    params = [{k: v.astype(np.float64) for k, v in p.items()}
              for p in graph.params]
    logits, _ = _forward_batch(graph, params, x.astype(np.float64),
                               train=False, rng=None)
    return np.exp(_log_softmax(logits))


def predict_batch(graph: ModelGraph, x: np.ndarray) -> np.ndarray:
    """Batched argmax predictions (inference mode, float64)."""
    _check_trainable(graph)
    params = [{k: v.astype(np.float64) for k, v in p.items()}
              for p in graph.params]
    logits, _ = _forward_batch(graph, params, x.astype(np.float64),
                               train=False, rng=None)
    return logits.argmax(axis=1)


def train(graph: ModelGraph, train_set, val_set, cfg: TrainConfig):
    """Train on (X, y) arrays; returns (trained graph, per-epoch history).

    History entries are dicts with epoch, loss, train_acc, val_acc.
    Deterministic given cfg.seed.
    """
    _check_trainable(graph)
    x_train, y_train = train_set
    x_val, y_val = (val_set if val_set is not None else (None, None))
    params = [{k: v.astype(np.float64) for k, v in p.items()}
              for p in graph.params]
    rng = np.random.default_rng(cfg.seed)
    opt = _Adam(cfg.learning_rate) if cfg.optimizer == "adam" \
        else _Sgd(cfg.learning_rate)
    n = x_train.shape[0]
    history = []
    x_train = x_train.astype(np.float64)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            logits, caches = _forward_batch(graph, params, xb,
                                            train=True, rng=rng)
            loss, dlogits = _loss_and_dlogits(logits, yb)
            grads = _backward_batch(graph, params, caches, dlogits)
            opt.step(params, grads)
            epoch_loss += loss * len(idx)
        logits, _ = _forward_batch(graph, params, x_train, train=False, rng=None)
        train_acc = float((logits.argmax(axis=1) == y_train).mean())
        if x_val is not None and len(x_val):
            vlogits, _ = _forward_batch(graph, params,
                                        x_val.astype(np.float64),
                                        train=False, rng=None)
            val_acc = float((vlogits.argmax(axis=1) == y_val).mean())
        else:
            val_acc = float("nan")
        history.append({"epoch": epoch, "loss": epoch_loss / n,
                        "train_acc": train_acc, "val_acc": val_acc})
    trained = tuple({k: v.astype(np.float32) for k, v in p.items()}
                    for p in params)
    return graph.with_params(trained), history


def history_to_csv(history) -> str:
    buf = io.StringIO()
    buf.write("epoch,loss,train_acc,val_acc\n")
    for row in history:
        buf.write(f"{row['epoch']},{row['loss']:.8f},"
                  f"{row['train_acc']:.6f},{row['val_acc']:.6f}\n")
    return buf.getvalue()


def grad_check(graph: ModelGraph, window: np.ndarray, label: int,
               step: float = 1e-4, num_samples: int = 200,
               seed: int = 0) -> float:
    """Max relative discrepancy between analytic and central finite-difference
    gradients over a random sample of parameters (dropout disabled)."""
    _check_trainable(graph)
    params = [{k: v.astype(np.float64) for k, v in p.items()}
              for p in graph.params]
    x = window[None].astype(np.float64)
    y = np.array([label])

    def loss_at(p):
        logits, _ = _forward_batch(graph, p, x, train=False, rng=None)
        loss, _ = _loss_and_dlogits(logits, y)
        return loss

    logits, caches = _forward_batch(graph, params, x, train=False, rng=None)
    _, dlogits = _loss_and_dlogits(logits, y)
    grads = _backward_batch(graph, params, caches, dlogits)

    coords = []
    for idx, layer_params in enumerate(params):
        for name, arr in layer_params.items():
            for flat in range(arr.size):
                coords.append((idx, name, flat))
    rng = np.random.default_rng(seed)
    if len(coords) > num_samples:
        picked = [coords[i] for i in
                  rng.choice(len(coords), size=num_samples, replace=False)]
    else:
        picked = coords

    worst = 0.0
    for idx, name, flat in picked:
        arr = params[idx][name]
        orig = arr.flat[flat]
        arr.flat[flat] = orig + step
        up = loss_at(params)
        arr.flat[flat] = orig - step
        down = loss_at(params)
        arr.flat[flat] = orig
        numeric = (up - down) / (2 * step)
        analytic = grads[idx][name].flat[flat]
        denom = max(abs(numeric), abs(analytic), 1e-6)
        worst = max(worst, abs(numeric - analytic) / denom)
    return worst
