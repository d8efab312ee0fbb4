"""Batch command line: synth, train, quantize, eval, bench, sweep, mcu-check.

Exit codes: 0 success, 1 validation error (bad flags, missing or malformed
inputs), 2 runtime failure. Every run writes a config echo JSON capturing
the effective flag values into its output directory. All outputs are
deterministic given --seed (host latency measurements excepted).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import benchlab, int8_engine, mcu, metrics, modelfile, synth, training
from .benchlab import SweepConfig
from .datapipe import (ChannelGroup, DatapipeError, SessionRecording,
                       fit_stats, ingest_csv, make_windows, normalize,
                       split_by_session, stack_windows, write_csv)
from .model_ir import GraphError, LayerKind, ModelGraph, Precision, build_mc_cnn
from .modelfile import ModelFileError
from .quantizer import QuantizedModel, quantize_model


class CliError(Exception):
    """Input validation failure; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


def _write_config_echo(outdir: Path, args: argparse.Namespace) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    effective = {k: v for k, v in sorted(vars(args).items())
                 if k not in ("func", "config")}
    (outdir / "config.json").write_text(
        json.dumps(effective, indent=2, default=str) + "\n")


def _load_dataset(data_dir: str) -> list[SessionRecording]:
    manifest_path = Path(data_dir) / "manifest.json"
    if not manifest_path.is_file():
        raise CliError(f"no manifest.json in {data_dir}; "
                       f"generate a dataset with `tinyhar synth` first")
    manifest = json.loads(manifest_path.read_text())
    sessions = []
    for entry in manifest["sessions"]:
        path = Path(data_dir) / entry["path"]
        if not path.is_file():
            raise CliError(f"dataset file missing: {path}")
        timestamps, frames, labels = ingest_csv(path)
        sessions.append(SessionRecording(subject=entry["subject"],
                                         session=entry["session"],
                                         timestamps=timestamps,
                                         frames=frames, labels=labels))
    return sessions


def _load_model(path: str):
    model_path = Path(path)
    if not model_path.is_file():
        raise CliError(f"model file not found: {path}")
    return modelfile.load(model_path)


def _prepare_split(sessions, group: ChannelGroup, window_len: int,
                   stride: int, held_out_session: int):
    windows = make_windows(sessions, window_len, stride, group)
    train, test = split_by_session(windows, held_out_session)
    if not train:
        raise CliError(f"no training windows left after holding out session "
                       f"{held_out_session}")
    stats = fit_stats(train)
    return normalize(train, stats), normalize(test, stats)


def cmd_synth(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    sessions = synth.synth_generate(args.seed, subjects=args.subjects,
                                    sessions_per_subject=args.sessions,
                                    duration_s=args.duration_s)
    entries = []
    for rec in sessions:
        name = f"subject{rec.subject:02d}_session{rec.session}.csv"
        write_csv(outdir / name, rec.timestamps, rec.frames, rec.labels)
        entries.append({"subject": rec.subject, "session": rec.session,
                        "path": name})
    (outdir / "manifest.json").write_text(
        json.dumps({"sessions": entries}, indent=2) + "\n")
    print(f"wrote {len(entries)} session files to {outdir}")
    return 0


def cmd_train(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    sessions = _load_dataset(args.data)
    group = ChannelGroup.from_width(args.group)
    train_set, test_set = _prepare_split(sessions, group, args.window_len,
                                         args.stride, args.held_out_session)
    graph = build_mc_cnn(group.width, args.window_len,
                         first_filters=args.filters, seed=args.seed)
    cfg = training.TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                               learning_rate=args.learning_rate,
                               seed=args.seed)
    graph, history = training.train(graph, stack_windows(train_set),
                                    stack_windows(test_set), cfg)
    model_path = outdir / "model_float.thar"
    modelfile.save(graph, model_path)
    (outdir / "history.csv").write_text(training.history_to_csv(history))
    last = history[-1]
    print(f"trained {args.epochs} epochs: loss {last['loss']:.4f}, "
          f"train_acc {last['train_acc']:.4f}, val_acc {last['val_acc']:.4f}")
    print(f"model written to {model_path}")
    return 0


def cmd_quantize(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    model = _load_model(args.model)
    if not isinstance(model, ModelGraph):
        raise CliError(f"{args.model} is already quantized")
    sessions = _load_dataset(args.data)
    group = ChannelGroup.from_width(model.input_shape[1])
    train_set, _ = _prepare_split(sessions, group, model.input_shape[0],
                                  args.stride, args.held_out_session)
    rep = [s.window for s in train_set[:args.rep_windows]]
    qmodel = quantize_model(model, rep)
    out_path = outdir / "model_int8.thar"
    size = modelfile.save(qmodel, out_path)
    float_size = len(modelfile.serialize(model))
    print(f"quantized model written to {out_path} "
          f"({size} bytes, float/int8 ratio {float_size / size:.2f})")
    return 0


def _arch_of(layers) -> str:
    return ("deep_conv_lstm" if any(s.kind == LayerKind.LSTM for s in layers)
            else "mc_cnn")


def cmd_eval(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    model = _load_model(args.model)
    quantized = isinstance(model, QuantizedModel)
    layers = (tuple(ql.spec for ql in model.layers) if quantized
              else model.layers)
    arch = _arch_of(layers)
    if arch != "mc_cnn":
        raise CliError("eval supports trained MC-CNN models only")
    sessions = _load_dataset(args.data)
    group = ChannelGroup.from_width(model.input_shape[1])
    _, test_set = _prepare_split(sessions, group, model.input_shape[0],
                                 args.stride, args.held_out_session)
    if not test_set:
        raise CliError(f"held-out session {args.held_out_session} "
                       f"produced no windows")
    if quantized:
        preds = np.empty(len(test_set), dtype=np.int64)
        for i, sample in enumerate(test_set):
            _, preds[i] = int8_engine.run_quantized(model, sample.window)
    else:
        x, _ = stack_windows(test_set)
        preds = training.predict_batch(model, x)
    labels = np.array([s.label for s in test_set])
    precision = Precision.INT8_FULL if quantized else Precision.FLOAT32
    size = len(modelfile.serialize(model))
    first_conv = next(s for s in layers if s.kind == LayerKind.CONV1D)
    report = benchlab.EvalReport(
        arch=arch, group=group, level="custom",
        filters=first_conv.out_filters, precision=precision,
        accuracy=metrics.accuracy(preds, labels),
        macro_f1=metrics.macro_f1(preds, labels),
        confusion=metrics.confusion(preds, labels),
        model_size_bytes=size,
        mcu_results=benchlab.mcu_results_for(model, precision, size))
    benchlab.render_report([report], outdir)
    print(f"accuracy {report.accuracy:.4f}, macro F1 {report.macro_f1:.4f}, "
          f"size {size} bytes; report in {outdir}")
    return 0


def cmd_bench(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    model = _load_model(args.model)
    rng = np.random.default_rng(args.seed)
    window = rng.normal(size=model.input_shape)
    stats = int8_engine.timed_inference(model, window, args.reps)
    (outdir / "latency.csv").write_text(
        "mean_us,p50_us,p95_us\n"
        f"{stats.mean_us:.1f},{stats.p50_us:.1f},{stats.p95_us:.1f}\n")
    print(f"latency over {args.reps} runs: mean {stats.mean_us:.1f} us, "
          f"p50 {stats.p50_us:.1f} us, p95 {stats.p95_us:.1f} us")
    return 0


def cmd_sweep(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    sessions = _load_dataset(args.data)
    cfg = SweepConfig(window_len=args.window_len, stride=args.stride,
                      held_out_session=args.held_out_session, seed=args.seed,
                      train_epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.learning_rate,
                      max_eval_windows=args.max_eval_windows,
                      measure_host_latency=args.measure_host_latency,
                      jobs=args.jobs)
    reports = benchlab.sweep(sessions, cfg)
    benchlab.render_report(reports, outdir)
    failures = [r.config_id for r in reports if r.error]
    print(f"{len(reports)} reports written to {outdir}"
          + (f" ({len(failures)} failed: {', '.join(failures)})"
             if failures else ""))
    return 0


def cmd_mcu_check(args) -> int:
    outdir = Path(args.out)
    _write_config_echo(outdir, args)
    model = _load_model(args.model)
    profiles = (mcu.load_profiles(args.profiles) if args.profiles
                else mcu.BUILTIN_PROFILES)
    if args.profile != "all":
        if args.profile not in profiles:
            raise CliError(f"unknown profile {args.profile!r}; "
                           f"available: {', '.join(sorted(profiles))}")
        profiles = {args.profile: profiles[args.profile]}
    size = len(modelfile.serialize(model))
    arena = mcu.estimate_arena(model)
    rows = ["profile,flash_ok,sram_ok,flash_needed_bytes,arena_needed_bytes"]
    for name in sorted(profiles):
        verdict = mcu.fits_on(size, arena, profiles[name])
        rows.append(f"{name},{int(verdict.flash_ok)},{int(verdict.sram_ok)},"
                    f"{verdict.flash_needed},{verdict.arena_needed}")
        status = "feasible" if verdict.feasible else "INFEASIBLE"
        print(f"{name:12s} {status:10s} flash {verdict.flash_needed}"
              f"/{profiles[name].flash_bytes} B, "
              f"sram {verdict.arena_needed}/{profiles[name].sram_bytes} B")
    (outdir / "feasibility.csv").write_text("\n".join(rows) + "\n")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="tinyhar",
                     description="Quantized time-series inference benchlab")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", default=None,
                       help="JSON config file; explicit flags win")
        p.add_argument("--seed", type=int, default=0, help="PRNG seed")
        p.add_argument("--out", default=f"runs/{name}",
                       help="output directory")
        return p

    p = add("synth", cmd_synth, "generate a synthetic labeled dataset")
    p.add_argument("--subjects", type=int, default=2, help="subject count")
    p.add_argument("--sessions", type=int, default=5,
                   help="sessions per subject")
    p.add_argument("--duration-s", type=float, default=300.0,
                   help="session length in seconds")

    def add_windowing(p):
        p.add_argument("--window-len", type=int, default=24,
                       help="window length in samples (6 Hz)")
        p.add_argument("--stride", type=int, default=12,
                       help="window stride in samples")
        p.add_argument("--held-out-session", type=int, default=5,
                       help="session id held out as test split")

    p = add("train", cmd_train, "train a float MC-CNN model")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--group", type=int, default=23,
                   choices=[17, 23, 768, 791], help="channel group width")
    p.add_argument("--filters", type=int, default=128,
                   help="first conv layer filter count (divisible by 4)")
    p.add_argument("--epochs", type=int, default=20, help="training epochs")
    p.add_argument("--batch-size", type=int, default=32, help="batch size")
    p.add_argument("--learning-rate", type=float, default=1e-3,
                   help="Adam learning rate")
    add_windowing(p)

    p = add("quantize", cmd_quantize, "full-integer quantize a float model")
    p.add_argument("--model", required=True, help="float .thar model file")
    p.add_argument("--data", required=True,
                   help="dataset directory (representative set source)")
    p.add_argument("--rep-windows", type=int, default=64,
                   help="representative window count for calibration")
    add_windowing(p)

    p = add("eval", cmd_eval, "evaluate a model on the held-out session")
    p.add_argument("--model", required=True, help=".thar model file")
    p.add_argument("--data", required=True, help="dataset directory")
    add_windowing(p)

    p = add("bench", cmd_bench, "measure host inference latency")
    p.add_argument("--model", required=True, help=".thar model file")
    p.add_argument("--reps", type=int, default=50,
                   help="timed repetitions (after warm-up)")

    p = add("sweep", cmd_sweep, "run the full configuration sweep")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--epochs", type=int, default=3,
                   help="training epochs per MC-CNN config")
    p.add_argument("--batch-size", type=int, default=32, help="batch size")
    p.add_argument("--learning-rate", type=float, default=1e-3,
                   help="Adam learning rate")
    p.add_argument("--max-eval-windows", type=int, default=300,
                   help="cap on per-config int8 evaluation windows")
    p.add_argument("--measure-host-latency", action="store_true",
                   help="also record host wall-clock latency "
                        "(makes the CSV nondeterministic)")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel config workers")
    add_windowing(p)

    p = add("mcu-check", cmd_mcu_check, "check flash/SRAM feasibility")
    p.add_argument("--model", required=True, help=".thar model file")
    p.add_argument("--profile", default="all",
                   help="MCU profile name, or 'all'")
    p.add_argument("--profiles", default=None,
                   help="JSON profile registry overriding the built-ins")
    return parser


def _apply_config_file(args: argparse.Namespace, argv) -> None:
    if not args.config:
        return
    path = Path(args.config)
    if not path.is_file():
        raise CliError(f"config file not found: {args.config}")
    overrides = json.loads(path.read_text())
    explicit = {a.lstrip("-").replace("-", "_").split("=")[0]
                for a in argv if a.startswith("--")}
    for key, value in overrides.items():
        if key in vars(args) and key not in explicit:
            setattr(args, key, value)


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _apply_config_file(args, argv)
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ModelFileError, DatapipeError, GraphError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failure
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
