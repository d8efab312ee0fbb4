import numpy as np
import pytest

from tinyhar import training
from tinyhar.model_ir import build_deep_conv_lstm, build_mc_cnn
from tinyhar.training import TrainConfig, UnsupportedLayerError, grad_check, train


def separable_toy_set(n=120, seed=0):
    """Two classes, 2 channels, 8 steps; class 1 carries a strong offset."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0, 0.3, size=(n, 8, 2))
    y = rng.integers(0, 2, size=n)
    x[y == 1] += 2.0
    return x, y


class TestTrain:
    def test_separable_toy_set_learns(self):
        x, y = separable_toy_set()
        g = build_mc_cnn(2, 8, 8, dense_width=8, num_classes=2, seed=0)
        cfg = TrainConfig(epochs=50, batch_size=16, seed=0)
        trained, history = train(g, (x, y), None, cfg)
        assert history[-1]["train_acc"] >= 0.99

    def test_lstm_graph_rejected(self):
        g = build_deep_conv_lstm(2, 24, 4, hidden=4, num_classes=15, seed=0)
        with pytest.raises(UnsupportedLayerError):
            train(g, (np.zeros((4, 24, 2)), np.zeros(4, dtype=int)),
                  None, TrainConfig(epochs=1))

    def test_same_seed_same_history(self):
        x, y = separable_toy_set()
        g = build_mc_cnn(2, 8, 8, dense_width=8, num_classes=2, seed=1)
        cfg = TrainConfig(epochs=5, batch_size=16, seed=7)
        _, h1 = train(g, (x, y), (x, y), cfg)
        _, h2 = train(g, (x, y), (x, y), cfg)
        assert h1 == h2

    def test_sgd_also_converges(self):
        x, y = separable_toy_set()
        g = build_mc_cnn(2, 8, 8, dense_width=8, num_classes=2, seed=0)
        cfg = TrainConfig(epochs=50, batch_size=16, learning_rate=0.05,
                          seed=0, optimizer="sgd")
        _, history = train(g, (x, y), None, cfg)
        assert history[-1]["train_acc"] >= 0.95

    def test_history_csv_shape(self):
        x, y = separable_toy_set(n=32)
        g = build_mc_cnn(2, 8, 4, dense_width=4, num_classes=2, seed=0)
        _, history = train(g, (x, y), (x, y), TrainConfig(epochs=3))
        text = training.history_to_csv(history)
        lines = text.strip().split("\n")
        assert lines[0] == "epoch,loss,train_acc,val_acc"
        assert len(lines) == 4


class TestConfigValidation:
    def test_bad_epochs(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)

    def test_bad_lr(self):
        with pytest.raises(ValueError):
            TrainConfig(learning_rate=1.5)


class TestGradCheck:
    def test_tiny_mc_cnn(self):
        g = build_mc_cnn(3, 12, 4, dense_width=5, num_classes=3, seed=0)
        w = np.random.default_rng(1).normal(size=(12, 3))
        assert grad_check(g, w, label=1, num_samples=200, seed=2) <= 1e-3

    def test_dense_only_graph(self):
        from tinyhar.model_ir import (ModelGraph, dense, flatten, init_params,
                                      relu, softmax)
        layers = (flatten(), dense(8, 6), relu(), dense(6, 3), softmax())
        g = ModelGraph(layers, init_params(layers, 0), (4, 2), 3)
        w = np.random.default_rng(3).normal(size=(4, 2))
        assert grad_check(g, w, label=0, num_samples=200, seed=4) <= 1e-4

    def test_zero_input_zero_conv_gradients(self):
        g = build_mc_cnn(3, 12, 4, dense_width=5, num_classes=3, seed=0)
        params = [{k: v.astype(np.float64) for k, v in p.items()}
                  for p in g.params]
        x = np.zeros((1, 12, 3))
        logits, caches = training._forward_batch(g, params, x,
                                                 train=False, rng=None)
        _, dlogits = training._loss_and_dlogits(logits, np.array([1]))
        grads = training._backward_batch(g, params, caches, dlogits)
        assert np.all(grads[0]["w"] == 0.0)  # conv weight grads vanish
