import json
from pathlib import Path

import pytest

from tinyhar import modelfile
from tinyhar.cli import main
from tinyhar.model_ir import ModelGraph, build_mc_cnn
from tinyhar.quantizer import QuantizedModel


def run(*argv):
    return main(list(argv))


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    code = run("synth", "--seed", "7", "--subjects", "1", "--sessions", "2",
               "--duration-s", "40", "--out", str(out))
    assert code == 0
    return out


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("train")
    code = run("train", "--data", str(dataset), "--group", "17",
               "--filters", "8", "--epochs", "1", "--window-len", "12",
               "--stride", "12", "--held-out-session", "2",
               "--seed", "1", "--out", str(out))
    assert code == 0
    return out / "model_float.thar"


class TestSynth:
    def test_outputs(self, dataset):
        manifest = json.loads((dataset / "manifest.json").read_text())
        assert len(manifest["sessions"]) == 2
        for entry in manifest["sessions"]:
            assert (dataset / entry["path"]).is_file()
        assert (dataset / "config.json").is_file()

    def test_same_seed_byte_identical(self, dataset, tmp_path):
        again = tmp_path / "again"
        assert run("synth", "--seed", "7", "--subjects", "1", "--sessions",
                   "2", "--duration-s", "40", "--out", str(again)) == 0
        for entry in json.loads((dataset / "manifest.json").read_text())["sessions"]:
            assert (again / entry["path"]).read_bytes() == \
                (dataset / entry["path"]).read_bytes()


class TestTrain:
    def test_writes_model_and_history(self, trained):
        assert trained.is_file()
        assert isinstance(modelfile.load(trained), ModelGraph)
        history = (trained.parent / "history.csv").read_text()
        assert history.splitlines()[0].startswith("epoch")

    def test_missing_dataset_is_validation_error(self, tmp_path):
        assert run("train", "--data", str(tmp_path / "nope"),
                   "--out", str(tmp_path / "out")) == 1


class TestQuantize:
    def test_produces_int8_model(self, dataset, trained, tmp_path):
        out = tmp_path / "q"
        code = run("quantize", "--model", str(trained), "--data",
                   str(dataset), "--window-len", "12", "--stride", "12",
                   "--held-out-session", "2", "--rep-windows", "8",
                   "--out", str(out))
        assert code == 0
        qm = modelfile.load(out / "model_int8.thar")
        assert isinstance(qm, QuantizedModel)
        float_size = len(modelfile.serialize(modelfile.load(trained)))
        int8_size = (out / "model_int8.thar").stat().st_size
        assert int8_size < float_size

    def test_rejects_already_quantized(self, dataset, trained, tmp_path):
        out = tmp_path / "q1"
        assert run("quantize", "--model", str(trained), "--data",
                   str(dataset), "--window-len", "12", "--stride", "12",
                   "--held-out-session", "2", "--out", str(out)) == 0
        assert run("quantize", "--model", str(out / "model_int8.thar"),
                   "--data", str(dataset), "--window-len", "12",
                   "--out", str(tmp_path / "q2")) == 1


class TestEval:
    def test_report_files(self, dataset, trained, tmp_path):
        out = tmp_path / "eval"
        code = run("eval", "--model", str(trained), "--data", str(dataset),
                   "--stride", "12", "--held-out-session", "2",
                   "--out", str(out))
        assert code == 0
        assert (out / "report.csv").is_file()
        assert (out / "report.md").is_file()

    def test_missing_model_exits_one(self, dataset, tmp_path):
        assert run("eval", "--model", str(tmp_path / "absent.thar"),
                   "--data", str(dataset), "--out", str(tmp_path / "o")) == 1

    def test_corrupt_model_exits_one(self, dataset, tmp_path):
        bad = tmp_path / "bad.thar"
        bad.write_bytes(b"NOPE" + b"\x00" * 32)
        assert run("eval", "--model", str(bad), "--data", str(dataset),
                   "--out", str(tmp_path / "o")) == 1


class TestBench:
    def test_latency_csv(self, trained, tmp_path):
        out = tmp_path / "bench"
        assert run("bench", "--model", str(trained), "--reps", "3",
                   "--out", str(out)) == 0
        lines = (out / "latency.csv").read_text().splitlines()
        assert lines[0] == "mean_us,p50_us,p95_us"
        assert float(lines[1].split(",")[0]) > 0


class TestMcuCheck:
    def test_exit_zero_even_when_infeasible(self, tmp_path, capsys):
        big = build_mc_cnn(23, 24, 400, seed=0)
        path = tmp_path / "big.thar"
        modelfile.save(big, path)
        assert run("mcu-check", "--model", str(path),
                   "--out", str(tmp_path / "o")) == 0
        text = (tmp_path / "o" / "feasibility.csv").read_text()
        assert "nrf52840,0," in text  # float model does not fit in flash

    def test_unknown_profile_exits_one(self, trained, tmp_path):
        assert run("mcu-check", "--model", str(trained), "--profile",
                   "esp32", "--out", str(tmp_path / "o")) == 1

    def test_custom_profile_registry(self, trained, tmp_path):
        registry = tmp_path / "profiles.json"
        registry.write_text(json.dumps({"huge": {
            "clock_hz": 1e9, "flash_bytes": 64 * 2**20,
            "sram_bytes": 16 * 2**20, "power_float_w": 1.0,
            "power_int8_w": 1.0, "core_factor": 1.0}}))
        out = tmp_path / "o"
        assert run("mcu-check", "--model", str(trained), "--profiles",
                   str(registry), "--profile", "huge", "--out", str(out)) == 0
        assert "huge,1,1" in (out / "feasibility.csv").read_text()


class TestSweepCommand:
    def test_small_sweep_deterministic(self, dataset, tmp_path):
        args = ("sweep", "--data", str(dataset), "--window-len", "12",
                "--stride", "12", "--held-out-session", "2", "--epochs", "0",
                "--max-eval-windows", "5", "--seed", "3")
        out1, out2 = tmp_path / "s1", tmp_path / "s2"
        assert run(*args, "--out", str(out1)) == 0
        assert run(*args, "--out", str(out2)) == 0
        assert (out1 / "report.csv").read_bytes() == \
            (out2 / "report.csv").read_bytes()
        rows = (out1 / "report.csv").read_text().splitlines()
        assert len(rows) == 1 + 48  # header + 2 arch x 4 groups x 3 x 2


class TestFlags:
    def test_bad_flag_exits_one(self, tmp_path, capsys):
        assert run("synth", "--bogus") == 1

    def test_config_file_merges_but_flags_win(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"subjects": 3, "duration_s": 10.0,
                                   "seed": 99}))
        out = tmp_path / "o"
        assert run("synth", "--config", str(cfg), "--subjects", "1",
                   "--sessions", "1", "--out", str(out)) == 0
        echo = json.loads((out / "config.json").read_text())
        assert echo["subjects"] == 1       # explicit flag wins
        assert echo["duration_s"] == 10.0  # config value applied
        assert echo["seed"] == 99

    def test_missing_config_file_exits_one(self, tmp_path):
        assert run("synth", "--config", str(tmp_path / "nope.json"),
                   "--out", str(tmp_path / "o")) == 1
