"""
End-to-end pipeline: poses -> audio -> channel -> receiver -> renderer

Ground truth is aligned with received frames out of band, by the frame start
sample the sender used; nothing extra is transmitted.
"""
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union
import logging
import time

import numpy as np

from .channel import ChannelConfig, apply_channel
from .corpus import SyntheticCorpusConfig, generate_poses
from .data import load_pose_file
from .errors import ConfigError, PayloadError, StageError
from .metrics import (
    MetricsReport,
    classification_metrics,
    frame_symbol_errors,
    joint_distances,
    joint_error,
    reference_pose,
    regression_metrics,
    TRANSMITTED_JOINTS,
)
from .modem import RATE_PRESETS, AudioBuffer, DecoderState, ModemConfig, build_stream
from .pose_core import (
    DEFAULT_DELTA,
    FramePayload,
    FullPose,
    PoseDecoder,
    PoseEncoder,
    QuantizedPose,
    TransmitPose,
    dequantize,
    select_keypoints,
)
from .renderer import (
    DEFAULT_CANVAS,
    DetectorModel,
    PcaDetector,
    PredictorModel,
    ReconstructedPose,
    load_detector,
    reconstruct,
)
from .render import render_frames

logger = logging.getLogger(__name__)

DEFAULT_CHUNK = 4800
# Received frames whose rounded coordinates moved more than this share of the
# normalized range count as corrupted when scoring the detector
CORRUPTION_FRACTION = 0.20


@dataclass(frozen=True)
class PipelineConfig:
    """
    Attributes:
        rate_kbps: data-rate preset (1.5, 3 or 6)
        modem: modem settings; built from the preset when None
        channel: channel settings (default codec 20 ms / 64 kbps)
        input: pose file; a synthetic corpus is generated when None
        corpus: synthetic corpus settings used without `input`
        output: directory for report, summary and frames (nothing written when None)
        detector, predictor: model files (optional)
        delta_threshold: temporal differencing threshold
        canvas: (width, height) for pixel metrics and rendering
        render: write skeleton frames to output/frames
        chunk_samples: receiver chunk size
        gap_samples: silence between frames
    """
    rate_kbps: float = 6.0
    modem: Optional[ModemConfig] = None
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    input: Optional[Path] = None
    corpus: SyntheticCorpusConfig = field(default_factory=lambda: SyntheticCorpusConfig(n_frames=100))
    output: Optional[Path] = None
    detector: Optional[Path] = None
    predictor: Optional[Path] = None
    delta_threshold: int = DEFAULT_DELTA
    canvas: Tuple[int, int] = DEFAULT_CANVAS
    render: bool = False
    chunk_samples: int = DEFAULT_CHUNK
    gap_samples: int = 0

    def __post_init__(self):
        key = f"{float(self.rate_kbps):g}"
        if key not in RATE_PRESETS:
            raise ConfigError(f"unknown rate preset {self.rate_kbps}; choose from {list(RATE_PRESETS)}")
        if self.modem is None:
            object.__setattr__(self, "modem", ModemConfig.from_preset(self.rate_kbps))
        elif self.modem.samples_per_symbol != RATE_PRESETS[key]:
            raise ConfigError(
                f"modem uses Ns={self.modem.samples_per_symbol} but the {key} kbps preset "
                f"needs Ns={RATE_PRESETS[key]}"
            )
        for name in ("input", "detector", "predictor"):
            path = getattr(self, name)
            if path is not None and not Path(path).is_file():
                raise ConfigError(f"{name} file not found: {path}")
        if self.chunk_samples < 1:
            raise ConfigError("chunk_samples must be >= 1")
        if self.gap_samples < 0:
            raise ConfigError("gap_samples must be >= 0")
        if min(self.canvas) <= 0:
            raise ConfigError("canvas must be positive")


@contextmanager
def stage(name: str, runtime: Dict[str, float]) -> Iterator[None]:
    """Time a stage and attribute any failure to it"""
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        logger.error("stage '%s' failed: %s", name, e)
        raise StageError(name, e) from e
    finally:
        runtime[name] = runtime.get(name, 0.0) + time.perf_counter() - start


def encode_poses(
    poses: Sequence[FullPose],
    modem: ModemConfig,
    delta_threshold: int = DEFAULT_DELTA,
    gap_samples: int = 0,
) -> Tuple[AudioBuffer, List[FramePayload], List[int]]:
    """Pose processor and modulator: (audio, payloads, frame start samples)"""
    encoder = PoseEncoder(delta_threshold)
    payloads = [encoder.encode(p) for p in poses]
    audio, starts = build_stream(payloads, modem, gap_samples)
    return audio, payloads, starts


def receive(audio: AudioBuffer, modem: ModemConfig,
            chunk_samples: int = DEFAULT_CHUNK) -> Tuple[List[FramePayload], DecoderState]:
    """Feed the receiver in fixed chunks and flush at the end"""
    state = DecoderState(modem)
    frames: List[FramePayload] = []
    for lo in range(0, len(audio), chunk_samples):
        frames.extend(state.feed(audio.samples[lo:lo + chunk_samples]))
    state.flush()
    return frames, state


def decode_payloads(
    frames: Sequence[FramePayload],
) -> Tuple[List[Optional[QuantizedPose]], PoseDecoder]:
    """Pose-level decoding; unusable frames map to None"""
    decoder = PoseDecoder()
    out: List[Optional[QuantizedPose]] = []
    for frame in frames:
        try:
            out.append(decoder.decode(frame))
        except PayloadError as e:
            logger.debug("undecodable frame at sample %s: %s", frame.start_sample, e)
            out.append(None)
    return out, decoder


def align_frames(received: Sequence[FramePayload], starts: Sequence[int],
                 tolerance: int) -> List[Optional[int]]:
    """
    Sent-frame index for every received frame (None when no sent frame
    starts within `tolerance` samples, or the index was already taken)
    """
    starts_arr = np.asarray(starts, dtype=np.int64)
    taken = set()
    out: List[Optional[int]] = []
    for frame in received:
        if frame.start_sample is None or starts_arr.size == 0:
            out.append(None)
            continue
        pos = int(np.searchsorted(starts_arr, frame.start_sample))
        candidates = [i for i in (pos - 1, pos) if 0 <= i < starts_arr.size]
        best = min(candidates, key=lambda i: abs(int(starts_arr[i]) - frame.start_sample))
        if abs(int(starts_arr[best]) - frame.start_sample) > tolerance or best in taken:
            out.append(None)
            continue
        taken.add(best)
        out.append(best)
    return out


def load_models(
    cfg: PipelineConfig,
) -> Tuple[Optional[Union[DetectorModel, PcaDetector]], Optional[PredictorModel]]:
    detector = load_detector(cfg.detector) if cfg.detector is not None else None
    predictor = PredictorModel.load(cfg.predictor) if cfg.predictor is not None else None
    return detector, predictor


def run_pipeline(
    cfg: PipelineConfig,
    poses: Optional[Sequence[FullPose]] = None,
    detector: Optional[Union[DetectorModel, PcaDetector]] = None,
    predictor: Optional[PredictorModel] = None,
) -> MetricsReport:
    """
    Run every stage and report

    Args:
        cfg: pipeline configuration
        poses: poses to send (overrides cfg.input / cfg.corpus)
        detector, predictor: in-memory models (override the configured files)

    Returns:
        MetricsReport; also written to cfg.output when set

    Raises:
        StageError: a stage failed (the stage name is attached)
    """
    runtime: Dict[str, float] = {}
    modem = cfg.modem or ModemConfig.from_preset(cfg.rate_kbps)

    with stage("load", runtime):
        if poses is None:
            poses = load_pose_file(cfg.input) if cfg.input else generate_poses(cfg.corpus)
        poses = list(poses)
        if detector is None and predictor is None:
            detector, predictor = load_models(cfg)

    with stage("encode", runtime):
        audio, payloads, starts = encode_poses(poses, modem, cfg.delta_threshold, cfg.gap_samples)
    logger.info("encoded %d frames into %.2f s of audio", len(payloads), audio.duration)

    with stage("channel", runtime):
        received_audio = apply_channel(audio, cfg.channel)

    with stage("decode", runtime):
        frames, state = receive(received_audio, modem, cfg.chunk_samples)
        index = align_frames(frames, starts, modem.samples_per_symbol // 2)
        # pose decoding follows the order frames were sent
        kept = sorted(
            ((i, f) for i, f in zip(index, frames) if i is not None), key=lambda t: t[0]
        )
        quantized, pose_decoder = decode_payloads([f for _, f in kept])

    with stage("render", runtime):
        sent_idx: List[int] = []
        recon: List[ReconstructedPose] = []
        for (i, _), q in zip(kept, quantized):
            if q is None:
                continue
            tp = dequantize(q, poses[i].t_ms)
            recon.append(reconstruct(tp, detector, predictor))
            sent_idx.append(i)
        if cfg.output is not None and cfg.render:
            render_frames(recon, Path(cfg.output) / "frames", cfg.canvas)

    with stage("metrics", runtime):
        report = _build_report(
            cfg, payloads, kept, sent_idx, recon, poses, state, pose_decoder,
            detector is not None, predictor is not None,
        )
    report.runtime = dict(runtime)

    if cfg.output is not None:
        write_report(report, cfg.output)
    logger.info("pipeline: %d/%d frames received", report.frames_received, report.frames_sent)
    return report


def transmit_pairs(
    cfg: PipelineConfig,
    poses: Optional[Sequence[FullPose]] = None,
) -> List[Tuple[TransmitPose, TransmitPose]]:
    """
    (sent, received) transmitted keypoints for every recovered frame

    Runs the sender, channel and receiver without the renderer; the pairs feed
    noise estimation.
    """
    modem = cfg.modem or ModemConfig.from_preset(cfg.rate_kbps)
    if poses is None:
        poses = load_pose_file(cfg.input) if cfg.input else generate_poses(cfg.corpus)
    poses = list(poses)
    audio, _, starts = encode_poses(poses, modem, cfg.delta_threshold, cfg.gap_samples)
    frames, _ = receive(apply_channel(audio, cfg.channel), modem, cfg.chunk_samples)
    index = align_frames(frames, starts, modem.samples_per_symbol // 2)
    kept = sorted(((i, f) for i, f in zip(index, frames) if i is not None), key=lambda t: t[0])
    quantized, _ = decode_payloads([f for _, f in kept])
    pairs = []
    for (i, _), q in zip(kept, quantized):
        if q is not None:
            pairs.append((select_keypoints(poses[i]), dequantize(q, poses[i].t_ms)))
    return pairs


def _build_report(
    cfg: PipelineConfig,
    payloads: Sequence[FramePayload],
    kept: Sequence[Tuple[int, FramePayload]],
    sent_idx: Sequence[int],
    recon: Sequence[ReconstructedPose],
    poses: Sequence[FullPose],
    state: DecoderState,
    pose_decoder: PoseDecoder,
    has_detector: bool,
    has_predictor: bool,
) -> MetricsReport:
    errors = compared = 0
    for i, frame in kept:
        sent = payloads[i]
        e, n = frame_symbol_errors(sent.frame_type, sent.symbols, frame.frame_type, frame.symbols)
        errors += e
        compared += n

    n_sent = len(payloads)
    n_received = len(recon)
    report = MetricsReport(
        frames_sent=n_sent,
        frames_received=n_received,
        frames_dropped=n_sent - n_received,
        ser=errors / compared if compared else None,
        symbols_compared=compared,
        frames_flagged=sum(1 for r in recon if r.erroneous),
        decoder={**state.stats, "orphan_displacements": pose_decoder.orphan_displacements},
        settings={
            "rate_kbps": float(cfg.rate_kbps),
            "scheme": cfg.modem.scheme if cfg.modem else "css",
            "channel": cfg.channel.label,
            "external": cfg.channel.is_external,
            "loss_prob": cfg.channel.network.loss_prob,
            "delta_threshold": cfg.delta_threshold,
            "canvas": list(cfg.canvas),
            "hand_model": "mlp" if has_predictor else "interpolation",
            "detector": has_detector,
        },
    )
    if not recon:
        return report

    gt = [reference_pose(poses[i]) for i in sent_idx]
    report.joint_error = joint_error(gt, recon, cfg.canvas).to_dict()

    pred_rows, target_rows = [], []
    for g, r in zip(gt, recon):
        for side_gt, side_rx in ((g.left_hand, r.left_hand), (g.right_hand, r.right_hand)):
            if side_gt is not None and side_rx is not None:
                pred_rows.append(np.asarray(side_rx).reshape(-1))
                target_rows.append(np.asarray(side_gt).reshape(-1))
    if pred_rows:
        report.predictor = regression_metrics(np.stack(pred_rows), np.stack(target_rows), cfg.canvas)

    if has_detector:
        scored = [k for k, r in enumerate(recon) if np.isfinite(r.loss)]
        if scored:
            dist = joint_distances([gt[k] for k in scored], [recon[k] for k in scored], (1, 1))
            labels = np.nanmax(dist[:, TRANSMITTED_JOINTS], axis=1) > CORRUPTION_FRACTION
            flags = [recon[k].erroneous for k in scored]
            report.detector = classification_metrics(flags, labels).to_dict()
    return report


def write_report(report: MetricsReport, outdir: Union[str, Path]) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (out / "summary.txt").write_text(report.summary(include_runtime=False) + "\n", encoding="utf-8")
