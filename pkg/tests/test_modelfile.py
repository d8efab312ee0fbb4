import numpy as np
import pytest

from tinyhar import modelfile
from tinyhar.model_ir import build_deep_conv_lstm, build_mc_cnn
from tinyhar.modelfile import (CorruptHeaderError, TruncatedPayloadError,
                               VersionMismatchError, deserialize, serialize)
from tinyhar.quantizer import quantize_model


@pytest.fixture(scope="module")
def float_graph():
    return build_mc_cnn(23, 24, 16, dense_width=8, seed=3)


@pytest.fixture(scope="module")
def quant_model(float_graph):
    rng = np.random.default_rng(0)
    rep = [rng.normal(size=(24, 23)) for _ in range(4)]
    return quantize_model(float_graph, rep)


def test_float_round_trip_bit_exact(float_graph):
    restored = deserialize(serialize(float_graph))
    assert restored.layers == float_graph.layers
    assert restored.input_shape == float_graph.input_shape
    assert restored.num_classes == float_graph.num_classes
    for orig, back in zip(float_graph.params, restored.params):
        assert set(orig) == set(back)
        for name in orig:
            assert orig[name].dtype == back[name].dtype
            assert np.array_equal(orig[name], back[name])


def test_quantized_round_trip_bit_exact(quant_model):
    restored = deserialize(serialize(quant_model))
    assert restored.input_qp == quant_model.input_qp
    for orig, back in zip(quant_model.layers, restored.layers):
        assert orig.spec == back.spec
        assert orig.in_qp == back.in_qp
        assert orig.out_qp == back.out_qp
        assert orig.multiplier == back.multiplier
        if orig.weights is None:
            assert back.weights is None
        else:
            for name in orig.weights:
                assert np.array_equal(orig.weights[name], back.weights[name])
                assert orig.weight_qps[name] == back.weight_qps[name]
        if orig.bias is None:
            assert back.bias is None
        else:
            assert np.array_equal(orig.bias, back.bias)
            assert back.bias.dtype == np.dtype("<i4")


def test_serialize_is_deterministic(quant_model):
    assert serialize(quant_model) == serialize(quant_model)


def test_lstm_graph_round_trip():
    g = build_deep_conv_lstm(17, 24, 8, hidden=6, seed=1)
    restored = deserialize(serialize(g))
    for orig, back in zip(g.params, restored.params):
        for name in orig:
            assert np.array_equal(orig[name], back[name])


def test_wrong_magic_rejected(float_graph):
    data = bytearray(serialize(float_graph))
    data[:4] = b"NOPE"
    with pytest.raises(CorruptHeaderError):
        deserialize(bytes(data))


def test_version_mismatch_rejected(float_graph):
    data = bytearray(serialize(float_graph))
    data[4:8] = (99).to_bytes(4, "little")
    with pytest.raises(VersionMismatchError):
        deserialize(bytes(data))


def test_truncated_mid_tensor_rejected(float_graph):
    data = serialize(float_graph)
    with pytest.raises(TruncatedPayloadError):
        deserialize(data[:len(data) // 2])


def test_truncated_header_rejected(float_graph):
    with pytest.raises(TruncatedPayloadError):
        deserialize(serialize(float_graph)[:7])


def test_save_load_round_trip(tmp_path, quant_model):
    path = tmp_path / "model.thar"
    written = modelfile.save(quant_model, path)
    assert path.stat().st_size == written
    restored = modelfile.load(path)
    assert restored.input_qp == quant_model.input_qp
