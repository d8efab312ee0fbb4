import numpy as np
import pytest
from hypothesis import given, strategies as st

from tinyhar import model_ir
from tinyhar.model_ir import (DivisibilityError, LayerKind, Precision,
                              ShapeUnderflowError, build_deep_conv_lstm,
                              build_mc_cnn, model_size_bytes, param_count)

ALL_GROUPS = (17, 23, 768, 791)
MC_CNN_LEVELS = (128, 256, 400)
DCL_LEVELS = (32, 64, 100)


def conv_layers(graph):
    return [s for s in graph.layers if s.kind == LayerKind.CONV1D]


class TestBuildMcCnn:
    def test_filter_ratio_400(self):
        g = build_mc_cnn(23, 24, 400)
        convs = conv_layers(g)
        assert convs[0].out_filters == 400
        assert convs[1].out_filters == 100

    def test_filter_ratio_128(self):
        convs = conv_layers(build_mc_cnn(23, 24, 128))
        assert convs[1].out_filters == 32

    def test_indivisible_filters_rejected(self):
        with pytest.raises(DivisibilityError):
            build_mc_cnn(23, 24, 130)

    def test_layer_sequence(self):
        kinds = [s.kind for s in build_mc_cnn(23, 24, 128).layers]
        assert kinds == [LayerKind.CONV1D, LayerKind.RELU, LayerKind.CONV1D,
                         LayerKind.RELU, LayerKind.DROPOUT,
                         LayerKind.AVGPOOL1D, LayerKind.FLATTEN,
                         LayerKind.DENSE, LayerKind.RELU, LayerKind.DENSE,
                         LayerKind.SOFTMAX]

    def test_tiny_window_underflows(self):
        with pytest.raises(ShapeUnderflowError):
            build_mc_cnn(23, 5, 128)  # two valid k=3 convs need >= 6 steps + pool

    @given(st.sampled_from([4, 8, 16, 128, 256, 400]))
    def test_four_to_one_ratio_holds(self, first_filters):
        convs = conv_layers(build_mc_cnn(8, 16, first_filters))
        assert convs[0].out_filters == 4 * convs[1].out_filters


class TestBuildDeepConvLstm:
    def test_uniform_filters(self):
        convs = conv_layers(build_deep_conv_lstm(23, 24, 100))
        assert len(convs) == 4
        assert all(c.out_filters == 100 for c in convs)

    def test_thermal_input_channels(self):
        convs = conv_layers(build_deep_conv_lstm(768, 24, 32))
        assert convs[0].in_channels == 768

    def test_two_lstm_layers(self):
        kinds = [s.kind for s in build_deep_conv_lstm(23, 24, 32).layers]
        assert kinds.count(LayerKind.LSTM) == 2

    def test_window_too_short(self):
        with pytest.raises(ShapeUnderflowError):
            build_deep_conv_lstm(23, 3, 32)  # 4 valid k=3 convs eat 8 steps


class TestParamCount:
    def test_dense(self):
        assert model_ir.layer_param_count(model_ir.dense(10, 15)) == 165

    def test_conv(self):
        spec = model_ir.conv1d(23, 400, 3)
        assert model_ir.layer_param_count(spec) == 23 * 3 * 400 + 400 == 27_600 + 400

    def test_lstm(self):
        assert model_ir.layer_param_count(model_ir.lstm(100, 64)) == 42_240

    @pytest.mark.parametrize("builder,levels", [
        (build_mc_cnn, MC_CNN_LEVELS), (build_deep_conv_lstm, DCL_LEVELS)])
    @pytest.mark.parametrize("channels", ALL_GROUPS)
    def test_matches_stored_scalar_enumeration(self, builder, levels, channels):
        # independent oracle: count every stored scalar in the param tensors
        g = builder(channels, 24, levels[0])
        _, total = param_count(g)
        brute = sum(arr.size for layer in g.params for arr in layer.values())
        assert total == brute


class TestAllPaperConfigs:
    @pytest.mark.parametrize("channels", ALL_GROUPS)
    @pytest.mark.parametrize("level", range(3))
    @pytest.mark.parametrize("arch", ["mc_cnn", "deep_conv_lstm"])
    def test_constructs_with_15_classes(self, channels, level, arch):
        if arch == "mc_cnn":
            g = build_mc_cnn(channels, 24, MC_CNN_LEVELS[level])
        else:
            g = build_deep_conv_lstm(channels, 24, DCL_LEVELS[level])
        assert g.layer_output_shapes()[-1] == (15,)


class TestModelSize:
    def test_float_size_no_overhead(self):
        g = build_mc_cnn(8, 16, 8, dense_width=4, num_classes=3)
        _, total = param_count(g)
        assert model_size_bytes(g, Precision.FLOAT32) == 4 * total

    def test_int8_strictly_smaller(self):
        g = build_mc_cnn(23, 24, 128)
        assert (model_size_bytes(g, Precision.INT8_FULL)
                < model_size_bytes(g, Precision.FLOAT32))

    @pytest.mark.parametrize("channels", ALL_GROUPS)
    @pytest.mark.parametrize("first_filters", MC_CNN_LEVELS)
    def test_ratio_in_paper_band(self, channels, first_filters):
        g = build_mc_cnn(channels, 24, first_filters)
        ratio = (model_size_bytes(g, Precision.FLOAT32)
                 / model_size_bytes(g, Precision.INT8_FULL))
        assert 3.0 <= ratio <= 4.5


class TestGraphImmutability:
    def test_params_frozen(self):
        g = build_mc_cnn(8, 16, 8)
        with pytest.raises(ValueError):
            g.params[0]["w"][0, 0, 0] = 1.0
