"""
Command-line entry point: `chirppose <command> [options]`

Every command accepts `--config FILE` (JSON, see chirppose.config) and
`--seed`; command-line flags override file values. Library errors exit with
status 2 and a one-line message.
"""
from dataclasses import replace
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence
import argparse
import json
import logging
import sys

import numpy as np

from . import __version__
from .channel import ChannelConfig, CodecSchedule, apply_channel, measure_snr_db
from .config import (
    channel_config,
    codec_from,
    corpus_config,
    load_config,
    merge,
    modem_config,
    pipeline_config,
    train_config,
)
from .corpus import generate_corpus, generate_poses
from .data import (
    PoseDataset,
    load_transmit_poses,
    save_received_file,
)
from .errors import ChirpPoseError, ConfigError, PayloadError
from .experiments import (
    default_schedules,
    detector_comparison,
    mean_by,
    noise_robustness,
    predictor_comparison,
    ser_sweep,
    write_rows,
)
from .metrics import classification_metrics, regression_metrics
from .modem import RATE_PRESETS, AudioBuffer, DecoderState, ModemConfig, ser_test, sync_bench
from .pipeline import PipelineConfig, encode_poses, run_pipeline, transmit_pairs
from .pose_core import DEFAULT_DELTA, PoseDecoder, Side, dequantize
from .render import render_frames
from .renderer import (
    DEFAULT_CANVAS,
    NoiseParams,
    PredictorModel,
    estimate_noise_params,
    fit_detector,
    fit_linear_regression,
    fit_pca_detector,
    fit_predictor,
    interpolate_hands,
    load_detector,
    make_labeled_set,
    reconstruct,
)
from .wav import read_wav, write_wav

logger = logging.getLogger(__name__)

Config = Dict[str, Dict[str, Any]]
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
CONCEAL_CHOICES = {"zero": "zero", "repeat": "repeat_last", "repeat_last": "repeat_last"}


# ========== Shared options ==========

def _add_modem_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("modem")
    rate = g.add_mutually_exclusive_group()
    rate.add_argument("--rate", type=str, choices=sorted(RATE_PRESETS, key=float),
                      help="data-rate preset in kbps (default 6)")
    rate.add_argument("--symbol-rate", type=int,
                      help="symbols/s instead of a preset; must divide the sample rate")
    g.add_argument("--scheme", choices=["css", "fsk"])
    g.add_argument("--dechirp", choices=["complex", "real"])
    g.add_argument("--threshold", type=float, dest="detection_threshold",
                   help="frame detection threshold (normalized correlation)")
    g.add_argument("--sample-rate", type=int)
    g.add_argument("--modulation-order", type=int)
    g.add_argument("--f0", type=float)
    g.add_argument("--f1", type=float)
    g.add_argument("--delimiter-freq", type=float)
    g.add_argument("--delimiter-length", type=int)
    g.add_argument("--preamble-symbols", type=int)
    g.add_argument("--amplitude", type=float)


MODEM_FLAGS = (
    "scheme", "dechirp", "detection_threshold", "sample_rate", "modulation_order",
    "f0", "f1", "delimiter_freq", "delimiter_length", "preamble_symbols", "amplitude",
    "symbol_rate",
)


def _modem(args: argparse.Namespace, conf: Config) -> ModemConfig:
    section = merge(conf["modem"], **{k: getattr(args, k) for k in MODEM_FLAGS})
    section = merge(section, rate_kbps=args.rate)
    if args.symbol_rate is not None:
        section.pop("rate_kbps", None)
    if "rate_kbps" not in section and "symbol_rate" not in section:
        section["rate_kbps"] = 6
    return modem_config(section)


def _rate(args: argparse.Namespace, conf: Config) -> float:
    if args.rate is not None:
        return float(args.rate)
    return float(conf["modem"].get("rate_kbps", 6))


def _add_channel_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("channel")
    g.add_argument("--codec-frame-ms", type=float)
    g.add_argument("--codec-bitrate-kbps", type=float)
    g.add_argument("--schedule", type=Path, help="JSON list of codec segments")
    g.add_argument("--no-codec", action="store_true", help="identity codec")
    g.add_argument("--external-cmd", help="external codec command with {in} and {out}")
    g.add_argument("--loss-prob", type=float)
    g.add_argument("--loss-segment-ms", type=float)
    g.add_argument("--conceal", choices=sorted(CONCEAL_CHOICES))
    g.add_argument("--snr-db", type=float)
    g.add_argument("--gain", type=float)


def _channel_given(args: argparse.Namespace, conf: Config) -> bool:
    flags = (args.codec_frame_ms, args.codec_bitrate_kbps, args.schedule, args.external_cmd,
             args.loss_prob, args.loss_segment_ms, args.conceal, args.snr_db, args.gain)
    return bool(conf["channel"]) or args.no_codec or any(f is not None for f in flags)


def _channel(args: argparse.Namespace, conf: Config) -> ChannelConfig:
    section = dict(conf["channel"])
    network = merge(
        section.get("network", {}),
        loss_prob=args.loss_prob,
        segment_ms=args.loss_segment_ms,
        concealment=CONCEAL_CHOICES.get(args.conceal) if args.conceal else None,
    )
    section = merge(section, snr_db=args.snr_db, gain=args.gain, seed=args.seed)
    section["network"] = network
    cfg = channel_config(section)

    codec = cfg.codec
    if args.external_cmd:
        codec = codec_from({"external": args.external_cmd})
    elif args.schedule is not None:
        codec = CodecSchedule.from_json(args.schedule)
    elif args.no_codec:
        codec = None
    elif args.codec_frame_ms is not None or args.codec_bitrate_kbps is not None:
        base = CodecSchedule.constant()
        seg = base.segments[0]
        codec = CodecSchedule.constant(
            args.codec_frame_ms if args.codec_frame_ms is not None else seg.frame_ms,
            args.codec_bitrate_kbps if args.codec_bitrate_kbps is not None else seg.bitrate_kbps,
        )
    cfg = replace(cfg, codec=codec)
    return cfg.with_seed(cfg.seed) if cfg.seed is not None else cfg


def _add_pose_source(p: argparse.ArgumentParser, frames: int) -> None:
    p.add_argument("--input", "--pose-file", type=Path, dest="input",
                   help="JSON Lines pose file (synthetic corpus when omitted)")
    p.add_argument("--frames", type=int, default=None,
                   help=f"synthetic corpus size (default {frames})")
    p.set_defaults(default_frames=frames)


def _corpus(args: argparse.Namespace, conf: Config):
    frames = args.frames
    if frames is None and "n_frames" not in conf["corpus"]:
        frames = args.default_frames
    return corpus_config(merge(conf["corpus"], n_frames=frames, seed=args.seed))


def _poses(args: argparse.Namespace, conf: Config):
    if args.input is not None:
        return PoseDataset.from_file(args.input).poses
    return generate_poses(_corpus(args, conf))


def _add_train_args(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("training")
    g.add_argument("--epochs", type=int)
    g.add_argument("--batch-size", type=int)
    g.add_argument("--learning-rate", type=float)
    g.add_argument("--lr-schedule", choices=["cosine", "step"])
    g.add_argument("--train-fraction", type=float, default=0.8)


def _train_cfg(args: argparse.Namespace, conf: Config):
    return train_config(merge(
        conf["train"],
        epochs=args.epochs,
        batch_size=args.batch_size,
        learning_rate=args.learning_rate,
        lr_schedule=args.lr_schedule,
        seed=args.seed,
    ))


def _add_noise_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--noise", type=Path, help="noise parameters from estimate-noise")
    p.add_argument("--noise-mean-px", type=float)
    p.add_argument("--noise-std-px", type=float)
    p.add_argument("--noise-fraction", type=float, help="share of each batch perturbed in training")
    p.add_argument("--noise-joints", type=int, help="perturb up to this many joints per sample")


def _noise(args: argparse.Namespace, canvas) -> Optional[NoiseParams]:
    if args.noise is not None:
        with open(args.noise, "r", encoding="utf-8") as fh:
            params = NoiseParams.from_dict(json.load(fh))
    elif args.noise_mean_px is not None:
        std = args.noise_std_px if args.noise_std_px is not None else 0.0
        params = NoiseParams(args.noise_mean_px, std, tuple(canvas))
    else:
        return None
    if args.noise_fraction is not None:
        params = replace(params, fraction=args.noise_fraction)
    if args.noise_joints is not None:
        params = replace(params, max_joints=args.noise_joints)
    return params


def _canvas(args: argparse.Namespace):
    return tuple(args.canvas) if args.canvas else DEFAULT_CANVAS


def _write_json(doc: Any, filepath: Path) -> None:
    filepath.parent.mkdir(parents=True, exist_ok=True)
    filepath.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    logger.info("wrote %s", filepath)


# ========== Commands ==========

def cmd_encode(args: argparse.Namespace, conf: Config) -> None:
    modem = _modem(args, conf)
    poses = _poses(args, conf)
    delta = args.delta_threshold
    if delta is None:
        delta = conf["pipeline"].get("delta_threshold", DEFAULT_DELTA)
    audio, payloads, _ = encode_poses(poses, modem, delta, args.gap_samples)
    write_wav(audio, args.out)
    logger.info("encoded %d poses into %d frames, %.2f s at %g bit/s",
                len(poses), len(payloads), audio.duration, modem.bit_rate)


def cmd_decode(args: argparse.Namespace, conf: Config) -> None:
    modem = _modem(args, conf)
    audio = read_wav(args.input)
    if audio.sample_rate != modem.sample_rate:
        raise ConfigError(f"{args.input}: sample rate {audio.sample_rate} != {modem.sample_rate}")
    state = DecoderState(modem)
    frames = []
    for lo in range(0, len(audio), args.chunk_samples):
        frames.extend(state.feed(audio.samples[lo:lo + args.chunk_samples]))
    state.flush()

    decoder = PoseDecoder()
    poses = []
    for frame in frames:
        try:
            q = decoder.decode(frame)
        except PayloadError as e:
            logger.debug("undecodable frame at sample %s: %s", frame.start_sample, e)
            continue
        if q is None:
            continue
        t_ms = int(round(1000 * (frame.start_sample or 0) / modem.sample_rate))
        poses.append(dequantize(q, t_ms))
    save_received_file(poses, args.out)
    logger.info("decoded %d poses from %d frames; decoder %s", len(poses), len(frames), state.stats)


def cmd_channel(args: argparse.Namespace, conf: Config) -> None:
    cfg = _channel(args, conf)
    audio = read_wav(args.input)
    out = apply_channel(audio, cfg)
    write_wav(out, args.out)
    if len(out) == len(audio):
        logger.info("channel %s: SNR %.2f dB", cfg.label, measure_snr_db(audio, out))


def _pipeline_cfg(args: argparse.Namespace, conf: Config, **extra) -> PipelineConfig:
    channel = _channel(args, conf) if _channel_given(args, conf) else ChannelConfig().with_seed(args.seed)
    return pipeline_config(
        conf["pipeline"],
        rate_kbps=_rate(args, conf),
        modem=_modem(args, conf),
        channel=channel,
        corpus=_corpus(args, conf),
        input=args.input,
        canvas=args.canvas,
        **extra,
    )


def cmd_pipeline(args: argparse.Namespace, conf: Config) -> None:
    cfg = _pipeline_cfg(
        args, conf,
        output=args.output,
        detector=args.detector,
        predictor=args.predictor,
        delta_threshold=args.delta_threshold,
        chunk_samples=args.chunk_samples,
        gap_samples=args.gap_samples,
        render=True if args.render else None,
    )
    report = run_pipeline(cfg)
    print(report.summary())


def cmd_ser_sweep(args: argparse.Namespace, conf: Config) -> None:
    if args.schedule is not None:
        schedules: List[Optional[CodecSchedule]] = [CodecSchedule.from_json(args.schedule)]
    elif args.no_codec:
        schedules = [None]
    else:
        schedules = default_schedules()
    base = args.seed or 0
    rows = ser_sweep(
        rates=[float(r) for r in args.rates],
        schedules=schedules,
        seeds=range(base, base + args.seeds),
        schemes=args.schemes,
        n_symbols=args.n_symbols,
        snr_db=args.snr_db,
        workers=args.workers,
    )
    if args.out is not None:
        write_rows(rows, args.out)
    for row in rows:
        print(f"{row['scheme']:4s} {row['rate_kbps']:>4g} kbps {row['schedule']:>20s}  "
              f"SER {row['mean_ser']:.4f} +/- {row['std_ser']:.4f}")


def cmd_ser_test(args: argparse.Namespace, conf: Config) -> None:
    modem = _modem(args, conf)
    through: Optional[Callable[[AudioBuffer], AudioBuffer]] = None
    label = "identity"
    if _channel_given(args, conf):
        channel = _channel(args, conf)
        label = channel.label

        def through(audio: AudioBuffer) -> AudioBuffer:
            return apply_channel(audio, channel)

    value = ser_test(modem, args.n_symbols, through, args.seed)
    print(json.dumps({
        "scheme": modem.scheme,
        "samples_per_symbol": modem.samples_per_symbol,
        "bit_rate": modem.bit_rate,
        "channel": label,
        "n_symbols": args.n_symbols,
        "ser": value,
    }, indent=2))


def cmd_sync_bench(args: argparse.Namespace, conf: Config) -> None:
    modem = _modem(args, conf)
    snr = None if args.clean else args.snr_db
    result = sync_bench(modem, snr, args.trials, args.seed, args.tolerance)
    print(json.dumps({"snr_db": snr, **result}, indent=2))


def cmd_gen_corpus(args: argparse.Namespace, conf: Config) -> None:
    section = merge(conf["corpus"], n_frames=args.frames, seed=args.seed,
                    sequence_length=args.sequence_length,
                    hand_missing_prob=args.hand_missing_prob)
    if args.canvas:
        section["canvas"] = tuple(args.canvas)
    count = generate_corpus(corpus_config(section), args.out)
    logger.info("wrote %d poses to %s", count, args.out)


def cmd_train_predictor(args: argparse.Namespace, conf: Config) -> None:
    canvas = _canvas(args)
    cfg = _train_cfg(args, conf)
    dataset = PoseDataset(_poses(args, conf))
    train, test = dataset.split(args.train_fraction, shuffle=True, seed=args.seed)
    train_pairs = {side: train.hand_pairs(side) for side in Side}
    test_pairs = {side: test.hand_pairs(side) for side in Side}
    noise = _noise(args, canvas)
    model = fit_predictor(train_pairs, cfg, noise=noise, hidden=tuple(args.hidden),
                          verbose=args.verbose)
    model.save(args.out)

    report: Dict[str, Any] = {"trained_with_noise": noise is not None,
                              "train_frames": len(train), "test_frames": len(test)}
    for side in Side:
        x, y = test_pairs[side]
        if not len(x):
            continue
        name = side.name.lower()
        lin = fit_linear_regression(*train_pairs[side])
        report[name] = {
            "mlp": regression_metrics(model.predict(x, side), y, canvas),
            "regression": regression_metrics(np.clip(lin.predict(x), 0.0, 1.0), y, canvas),
            "interpolation": regression_metrics(interpolate_hands(x), y, canvas),
        }
        logger.info("%s hand test MSE %.3f px^2 (interpolation %.3f)", name,
                    report[name]["mlp"]["mse"], report[name]["interpolation"]["mse"])
    if args.report is not None:
        _write_json(report, args.report)


def cmd_train_detector(args: argparse.Namespace, conf: Config) -> None:
    cfg = _train_cfg(args, conf)
    dataset = PoseDataset(_poses(args, conf))
    train, test = dataset.split(args.train_fraction, shuffle=True, seed=args.seed)
    x_train = train.transmit_matrix()
    if args.kind == "pca":
        detector: Any = fit_pca_detector(x_train, args.components)
    else:
        detector = fit_detector(x_train, (args.hidden, args.latent), cfg, verbose=args.verbose)
    detector.save(args.out)

    report: Dict[str, Any] = {"kind": args.kind, "threshold": detector.loss_threshold,
                              "train_poses": int(len(x_train))}
    x_test = test.transmit_matrix()
    if len(x_test):
        poses, labels = make_labeled_set(x_test, np.random.default_rng(args.seed),
                                         args.error_fraction)
        flags, _ = detector.detect(poses)
        scores = classification_metrics(flags, labels)
        report["test"] = scores.to_dict()
        logger.info("detector test accuracy %.4f", scores.accuracy)
    if args.report is not None:
        _write_json(report, args.report)


def cmd_detect(args: argparse.Namespace, conf: Config) -> None:
    detector = load_detector(args.model)
    rows = []
    for i, pose in enumerate(load_transmit_poses(args.input)):
        entry: Dict[str, Any] = {"frame": i, "t_ms": pose.t_ms, "erroneous": None, "loss": None}
        if pose.left_present and pose.right_present:
            flags, loss = detector.detect(pose.as_vector()[None, :])
            entry["erroneous"] = bool(flags[0])
            entry["loss"] = float(loss[0])
        rows.append(entry)
    flagged = sum(1 for r in rows if r["erroneous"])
    scored = sum(1 for r in rows if r["erroneous"] is not None)
    if args.out is not None:
        _write_json(rows, args.out)
    print(f"{flagged} of {scored} complete poses flagged ({len(rows)} frames)")


def cmd_predict(args: argparse.Namespace, conf: Config) -> None:
    model = PredictorModel.load(args.model) if args.model is not None else None
    rows = []
    for pose in load_transmit_poses(args.input):
        r = reconstruct(pose, None, model)
        rows.append({
            "t_ms": r.t_ms,
            "left": None if r.left_hand is None else np.asarray(r.left_hand).tolist(),
            "right": None if r.right_hand is None else np.asarray(r.right_hand).tolist(),
        })
    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    logger.info("completed hands for %d poses (%s)", len(rows),
                "mlp" if model is not None else "interpolation")


def cmd_estimate_noise(args: argparse.Namespace, conf: Config) -> None:
    cfg = _pipeline_cfg(args, conf)
    pairs = transmit_pairs(cfg)
    params = estimate_noise_params([(gt.keypoints, rx.keypoints) for gt, rx in pairs], cfg.canvas)
    _write_json(params.to_dict(), args.out)
    print(f"mean {params.mean_px:.3f} px, std {params.std_px:.3f} px over {len(pairs)} frames")


def cmd_render(args: argparse.Namespace, conf: Config) -> None:
    canvas = _canvas(args)
    detector: Optional[Any] = load_detector(args.detector) if args.detector else None
    predictor = PredictorModel.load(args.predictor) if args.predictor else None
    poses = [reconstruct(p, detector, predictor) for p in load_transmit_poses(args.input)]
    index = render_frames(poses, args.outdir, canvas, args.format, args.render_dropped)
    print(f"rendered {sum(e['file'] is not None for e in index)} of {len(index)} frames")


def cmd_eval(args: argparse.Namespace, conf: Config) -> None:
    canvas = _canvas(args)
    cfg = _train_cfg(args, conf)
    dataset = PoseDataset(_poses(args, conf))
    base = args.seed or 0
    seeds = list(range(base, base + args.seeds))
    outdir = args.outdir
    todo = ("predictors", "noise", "detectors") if args.experiment == "all" else (args.experiment,)
    noise = _noise(args, canvas)

    if "predictors" in todo:
        rows = predictor_comparison(dataset, cfg, noise, seeds, args.train_fraction, canvas)
        write_rows(rows, outdir / "predictors.csv")
        for row in mean_by(rows, ["method"], ["mae", "mse", "r2"]):
            print(f"{row['method']:>13s}  MSE {row['mse']:10.3f} px^2  MAE {row['mae']:7.3f} px")
    if "noise" in todo:
        if noise is None:
            raise ConfigError("the noise experiment needs --noise or --noise-mean-px")
        rows = noise_robustness(dataset, noise, cfg, seeds=seeds,
                                train_fraction=args.train_fraction, canvas=canvas,
                                keypoints=args.score_keypoints)
        write_rows(rows, outdir / "noise_robustness.csv")
        for row in mean_by(rows, ["model", "displacement_px"], ["mse"]):
            print(f"{row['model']:>5s} {row['displacement_px']:4g} px  MSE {row['mse']:10.3f} px^2")
    if "detectors" in todo:
        rows = detector_comparison(dataset, (args.hidden, args.latent), args.components, cfg,
                                   args.error_fraction, seeds, args.train_fraction)
        write_rows(rows, outdir / "detectors.csv")
        for row in mean_by(rows, ["detector"], ["accuracy", "f1"]):
            f1 = "n/a" if row["f1"] is None else f"{row['f1']:.4f}"
            print(f"{row['detector']:>11s}  accuracy {row['accuracy']:.4f}  F1 {f1}")


# ========== Parser ==========

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chirppose",
        description="Pose keypoints over audio: modem, channel emulation, renderer models",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", type=Path, help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.set_defaults(func=func)
        return p

    def canvas_arg(p: argparse.ArgumentParser) -> None:
        p.add_argument("--canvas", type=int, nargs=2, metavar=("WIDTH", "HEIGHT"))

    p = command("encode", cmd_encode, "poses -> WAV")
    _add_pose_source(p, 100)
    _add_modem_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--delta-threshold", type=int)
    p.add_argument("--gap-samples", type=int, default=0)

    p = command("decode", cmd_decode, "WAV -> received poses (JSON Lines)")
    _add_modem_args(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--chunk-samples", type=int, default=4800)

    p = command("channel", cmd_channel, "run a WAV file through the channel emulator")
    _add_channel_args(p)
    p.add_argument("--input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = command("pipeline", cmd_pipeline, "end-to-end run with report")
    _add_pose_source(p, 100)
    _add_modem_args(p)
    _add_channel_args(p)
    canvas_arg(p)
    p.add_argument("--output", type=Path)
    p.add_argument("--detector", type=Path)
    p.add_argument("--predictor", type=Path)
    p.add_argument("--render", action="store_true")
    p.add_argument("--delta-threshold", type=int)
    p.add_argument("--chunk-samples", type=int)
    p.add_argument("--gap-samples", type=int)

    p = command("ser-sweep", cmd_ser_sweep, "SER over rates, schemes and codec settings")
    p.add_argument("--rates", nargs="+", default=["1.5", "3", "6"], choices=sorted(RATE_PRESETS, key=float))
    p.add_argument("--schemes", nargs="+", default=["css", "fsk"], choices=["css", "fsk"])
    p.add_argument("--seeds", type=int, default=5, help="repetitions per cell")
    p.add_argument("--n-symbols", type=int, default=2000)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--schedule", type=Path, help="single codec schedule instead of the default grid")
    p.add_argument("--no-codec", action="store_true")
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, help=".csv or .json")

    p = command("ser-test", cmd_ser_test, "symbol error rate of random symbols")
    _add_modem_args(p)
    _add_channel_args(p)
    p.add_argument("--n-symbols", type=int, default=10000)

    p = command("sync-bench", cmd_sync_bench, "frame synchronization benchmark")
    _add_modem_args(p)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--clean", action="store_true", help="no added noise")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--tolerance", type=int, default=2)

    p = command("gen-corpus", cmd_gen_corpus, "write a synthetic pose corpus")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--frames", type=int)
    p.add_argument("--sequence-length", type=int)
    p.add_argument("--hand-missing-prob", type=float)
    canvas_arg(p)

    p = command("train-predictor", cmd_train_predictor, "train the hand predictor")
    _add_pose_source(p, 2000)
    _add_train_args(p)
    _add_noise_args(p)
    canvas_arg(p)
    p.add_argument("--hidden", type=int, nargs=2, default=[128, 128])
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path)

    p = command("train-detector", cmd_train_detector, "train the pose error detector")
    _add_pose_source(p, 2000)
    _add_train_args(p)
    p.add_argument("--kind", choices=["autoencoder", "pca"], default="autoencoder")
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--latent", type=int, default=16)
    p.add_argument("--components", type=int, default=16)
    p.add_argument("--error-fraction", type=float, default=0.20)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--report", type=Path)

    p = command("detect", cmd_detect, "flag erroneous poses")
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--input", type=Path, required=True, help="pose or received-pose file")
    p.add_argument("--out", type=Path)

    p = command("predict", cmd_predict, "complete hands from transmitted keypoints")
    p.add_argument("--model", type=Path, help="predictor model (interpolation when omitted)")
    p.add_argument("--input", type=Path, required=True, help="pose or received-pose file")
    p.add_argument("--out", type=Path, required=True)

    p = command("estimate-noise", cmd_estimate_noise, "joint displacement statistics of a channel")
    _add_pose_source(p, 200)
    _add_modem_args(p)
    _add_channel_args(p)
    canvas_arg(p)
    p.add_argument("--out", type=Path, required=True)

    p = command("render", cmd_render, "draw skeleton frames")
    p.add_argument("--input", type=Path, required=True, help="pose or received-pose file")
    p.add_argument("--outdir", type=Path, required=True)
    p.add_argument("--detector", type=Path)
    p.add_argument("--predictor", type=Path)
    p.add_argument("--format", choices=["png", "ppm"], default="png")
    p.add_argument("--render-dropped", action="store_true")
    canvas_arg(p)

    p = command("eval", cmd_eval, "predictor, noise-robustness and detector experiments")
    _add_pose_source(p, 2000)
    _add_train_args(p)
    _add_noise_args(p)
    canvas_arg(p)
    p.add_argument("--experiment", choices=["predictors", "noise", "detectors", "all"], default="all")
    p.add_argument("--score-keypoints", choices=["excluded", "all"], default="excluded",
                   help="hand keypoints scored by the noise experiment")
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--hidden", type=int, default=64)
    p.add_argument("--latent", type=int, default=16)
    p.add_argument("--components", type=int, default=16)
    p.add_argument("--error-fraction", type=float, default=0.20)
    p.add_argument("--outdir", type=Path, default=Path("results"))
    return parser


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    try:
        conf = load_config(args.config)
        args.func(args, conf)
    except (ChirpPoseError, OSError) as e:
        print(f"chirppose: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
