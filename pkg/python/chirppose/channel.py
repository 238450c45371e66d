"""
Codec and network channel emulation

    r(t) = post( N( C_{b(t), f(t)} { x(t) } ) )

C is a transform-codec stand-in (sine-window MDCT, a bitrate-dependent audio
bandwidth, keep the largest coefficients, uniform quantization) driven by a
frame schedule, N drops
fixed-length units at random, and post adds white noise and gain. An external
command can replace C to run audio through a real codec.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import json
import logging
import math
import shlex
import shutil
import subprocess
import tempfile

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from .errors import ConfigError, ExternalToolError
from .modem import AudioBuffer, add_awgn
from . import wav

logger = logging.getLogger(__name__)

FRAME_MS_RANGE = (2.5, 60.0)
BITRATE_RANGE = (6.0, 256.0)
DEFAULT_FRAME_MS = 20.0
DEFAULT_BITRATE = 64.0
DELTA0 = 0.03
# per coded block; shorter frames spend more of the bitrate on it
SIDE_INFO_BITS = 100.0
# coded audio bandwidth above the floor per kbps left for coefficients
HZ_PER_KBPS = 187.5
MIN_BANDWIDTH_HZ = 4000.0
CONCEALMENTS = ("zero", "repeat_last")


# ========== Configuration ==========

@dataclass(frozen=True)
class CodecSegment:
    """A stretch of the schedule with fixed frame size and bitrate"""
    duration_ms: float = math.inf
    frame_ms: float = DEFAULT_FRAME_MS
    bitrate_kbps: float = DEFAULT_BITRATE

    def __post_init__(self):
        if not self.duration_ms > 0:
            raise ConfigError("segment duration must be positive")
        lo, hi = FRAME_MS_RANGE
        if not lo <= self.frame_ms <= hi:
            raise ConfigError(f"frame size {self.frame_ms} ms outside [{lo}, {hi}]")
        lo, hi = BITRATE_RANGE
        if not lo <= self.bitrate_kbps <= hi:
            raise ConfigError(f"bitrate {self.bitrate_kbps} kbps outside [{lo}, {hi}]")


@dataclass(frozen=True)
class CodecSchedule:
    """
    Ordered codec segments; the last one extends to the end of the signal

    Example:
        >>> schedule = CodecSchedule.constant(frame_ms=10, bitrate_kbps=32)
    """
    segments: Tuple[CodecSegment, ...] = (CodecSegment(),)

    def __post_init__(self):
        if not self.segments:
            raise ConfigError("codec schedule needs at least one segment")
        object.__setattr__(self, "segments", tuple(self.segments))

    @classmethod
    def constant(cls, frame_ms: float = DEFAULT_FRAME_MS,
                 bitrate_kbps: float = DEFAULT_BITRATE) -> "CodecSchedule":
        return cls((CodecSegment(math.inf, frame_ms, bitrate_kbps),))

    @classmethod
    def from_list(cls, items: Sequence[dict]) -> "CodecSchedule":
        segments = []
        for item in items:
            segments.append(CodecSegment(
                duration_ms=float(item.get("duration_ms", math.inf)),
                frame_ms=float(item.get("frame_ms", DEFAULT_FRAME_MS)),
                bitrate_kbps=float(item.get("bitrate_kbps", DEFAULT_BITRATE)),
            ))
        return cls(tuple(segments))

    @classmethod
    def from_json(cls, filepath: Union[str, Path]) -> "CodecSchedule":
        """Load a JSON list of segments (or {"segments": [...]})"""
        with open(filepath, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        if isinstance(doc, dict):
            doc = doc.get("segments", [])
        if not isinstance(doc, list):
            raise ConfigError(f"{filepath}: expected a list of segments")
        return cls.from_list(doc)

    def to_list(self) -> List[dict]:
        return [
            {
                "duration_ms": s.duration_ms if math.isfinite(s.duration_ms) else None,
                "frame_ms": s.frame_ms,
                "bitrate_kbps": s.bitrate_kbps,
            }
            for s in self.segments
        ]

    def boundaries(self, n_samples: int, sample_rate: int) -> List[Tuple[int, int, CodecSegment]]:
        """(start, stop, segment) sample ranges covering [0, n_samples)"""
        out = []
        start, elapsed_ms = 0, 0.0
        for i, seg in enumerate(self.segments):
            if start >= n_samples:
                break
            last = i == len(self.segments) - 1
            if last or not math.isfinite(seg.duration_ms):
                stop = n_samples
            else:
                elapsed_ms += seg.duration_ms
                stop = min(n_samples, int(round(elapsed_ms * sample_rate / 1000)))
            if stop > start:
                out.append((start, stop, seg))
            start = stop
            if stop == n_samples:
                break
        return out


@dataclass(frozen=True)
class NetworkModel:
    """
    Independent loss of fixed-length units

    Attributes:
        segment_ms: loss unit duration
        loss_prob: drop probability per unit
        concealment: 'zero' or 'repeat_last'
        seed: drop-mask seed
    """
    segment_ms: float = 20.0
    loss_prob: float = 0.0
    concealment: str = "zero"
    seed: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ConfigError(f"loss_prob must lie in [0, 1], got {self.loss_prob}")
        if not self.segment_ms > 0:
            raise ConfigError("segment_ms must be positive")
        if self.concealment not in CONCEALMENTS:
            raise ConfigError(f"concealment must be one of {CONCEALMENTS}")


@dataclass(frozen=True)
class ExternalCodec:
    """
    Shell command run on a WAV file; `{in}` and `{out}` are replaced by paths

    Example:
        >>> ExternalCodec("sh -c 'opusenc --bitrate 64 {in} - | opusdec - {out}'")
    """
    command: str
    timeout: Optional[float] = 120.0


@dataclass(frozen=True)
class ChannelConfig:
    """
    Codec, then network, then post-stage noise and gain

    codec=None is the identity codec.
    """
    codec: Union[CodecSchedule, ExternalCodec, None] = field(default_factory=CodecSchedule)
    network: NetworkModel = field(default_factory=NetworkModel)
    snr_db: Optional[float] = None
    gain: float = 1.0
    seed: Optional[int] = None

    @classmethod
    def identity(cls) -> "ChannelConfig":
        return cls(codec=None)

    @property
    def is_external(self) -> bool:
        return isinstance(self.codec, ExternalCodec)

    @property
    def label(self) -> str:
        if self.codec is None:
            return "identity"
        if isinstance(self.codec, ExternalCodec):
            return "external"
        seg = self.codec.segments[0]
        suffix = "+vbr" if len(self.codec.segments) > 1 else ""
        return f"{seg.frame_ms:g}ms/{seg.bitrate_kbps:g}kbps{suffix}"

    def with_seed(self, seed: Optional[int]) -> "ChannelConfig":
        net = self.network
        network = NetworkModel(net.segment_ms, net.loss_prob, net.concealment, seed)
        return ChannelConfig(self.codec, network, self.snr_db, self.gain, seed)


# ========== MDCT ==========

def sine_window(length: int) -> np.ndarray:
    n = np.arange(length)
    return np.sin(np.pi * (n + 0.5) / length)


def mdct(blocks: np.ndarray) -> np.ndarray:
    """
    Orthonormal MDCT of windowed (n, 2N) blocks -> (n, N) coefficients

    Quarters (a, b, c, d) fold to (-c_r - d, a - b_r), then DCT-IV.
    """
    two_n = blocks.shape[-1]
    q = two_n // 4
    a, b, c, d = (blocks[..., i * q:(i + 1) * q] for i in range(4))
    folded = np.concatenate([-c[..., ::-1] - d, a - b[..., ::-1]], axis=-1)
    return sp_fft.dct(folded, type=4, norm="ortho", axis=-1)


def imdct(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of mdct before windowing: (n, N) -> (n, 2N) aliased blocks"""
    u = sp_fft.dct(coeffs, type=4, norm="ortho", axis=-1)
    half = u.shape[-1] // 2
    u1, u2 = u[..., :half], u[..., half:]
    return np.concatenate([u2, -u2[..., ::-1], -u1[..., ::-1], -u1], axis=-1)


def codec_window_length(frame_ms: float, sample_rate: int) -> int:
    """Window length in samples: frame size rounded to an even count (>= 4)"""
    n = int(round(frame_ms * sample_rate / 1000))
    n += n % 2
    # quarters of the window must be whole samples
    n += (-n) % 4
    return max(n, 4)


def retention_fraction(bitrate_kbps: float) -> float:
    """rho(b) = clamp(b / 128, 0.125, 1)"""
    return float(min(1.0, max(0.125, bitrate_kbps / 128.0)))


def quant_step(bitrate_kbps: float, delta0: float = DELTA0) -> float:
    """Delta(b) = Delta0 * 64 / b"""
    return delta0 * 64.0 / bitrate_kbps


def coded_bandwidth(bitrate_kbps: float, frame_ms: float, sample_rate: int) -> float:
    """
    Highest coded frequency in Hz

    Side information costs SIDE_INFO_BITS per hop (half a frame); the rest of
    the bitrate buys bandwidth above MIN_BANDWIDTH_HZ, capped at Nyquist.

    Example:
        >>> coded_bandwidth(64, 20, 48000)
        14125.0
    """
    hop_ms = frame_ms / 2
    coefficient_kbps = max(0.0, bitrate_kbps - SIDE_INFO_BITS / hop_ms)
    return float(min(sample_rate / 2, MIN_BANDWIDTH_HZ + HZ_PER_KBPS * coefficient_kbps))


def _code_block_coefficients(coeffs: np.ndarray, seg: CodecSegment, sample_rate: int) -> np.ndarray:
    n = coeffs.shape[1]
    # bin k of an N-coefficient MDCT is centred on (k + 0.5) * fs / (2N)
    centres = (np.arange(n) + 0.5) * sample_rate / (2 * n)
    cutoff = coded_bandwidth(seg.bitrate_kbps, seg.frame_ms, sample_rate)
    coeffs = np.where(centres <= cutoff, coeffs, 0.0)
    keep = int(math.ceil(retention_fraction(seg.bitrate_kbps) * n))
    out = np.zeros_like(coeffs)
    if keep >= n:
        kept = coeffs
    else:
        idx = np.argpartition(np.abs(coeffs), n - keep, axis=1)[:, n - keep:]
        rows = np.arange(coeffs.shape[0])[:, None]
        out[rows, idx] = coeffs[rows, idx]
        kept = out
    step = quant_step(seg.bitrate_kbps)
    return step * np.round(kept / step)


def _codec_segment(samples: np.ndarray, seg: CodecSegment, sample_rate: int) -> np.ndarray:
    length = samples.size
    window_len = codec_window_length(seg.frame_ms, sample_rate)
    hop = window_len // 2
    n_hops = -(-length // hop)
    padded = np.zeros((n_hops + 2) * hop)
    padded[hop:hop + length] = samples
    n_blocks = n_hops + 1
    idx = np.arange(n_blocks)[:, None] * hop + np.arange(window_len)[None, :]
    window = sine_window(window_len)

    coeffs = mdct(padded[idx] * window)
    coded = _code_block_coefficients(coeffs, seg, sample_rate)
    blocks = imdct(coded) * window

    # overlap-add at hop N
    out = np.zeros_like(padded)
    out[: n_blocks * hop] += blocks[:, :hop].reshape(-1)
    out[hop: hop + n_blocks * hop] += blocks[:, hop:].reshape(-1)
    return out[hop:hop + length]


def apply_codec(audio: AudioBuffer, schedule: Optional[CodecSchedule]) -> AudioBuffer:
    """
    Emulated transform codec; output length equals input length

    Each schedule segment is coded independently with its own window length,
    bandwidth, retention fraction and quantization step.
    """
    if schedule is None:
        return audio.copy()
    out = np.empty_like(audio.samples)
    for start, stop, seg in schedule.boundaries(len(audio), audio.sample_rate):
        out[start:stop] = _codec_segment(audio.samples[start:stop], seg, audio.sample_rate)
    return AudioBuffer(out, audio.sample_rate)


# ========== Network ==========

def network_drop_mask(n_units: int, model: NetworkModel) -> np.ndarray:
    """Seeded boolean mask of dropped units"""
    return np.random.default_rng(model.seed).random(n_units) < model.loss_prob


def apply_network(audio: AudioBuffer, model: NetworkModel) -> AudioBuffer:
    unit = max(1, int(round(model.segment_ms * audio.sample_rate / 1000)))
    n = len(audio)
    n_units = -(-n // unit)
    mask = network_drop_mask(n_units, model)
    out = audio.samples.copy()
    if not mask.any():
        return AudioBuffer(out, audio.sample_rate)
    for i in np.flatnonzero(mask):
        lo, hi = i * unit, min(n, (i + 1) * unit)
        if model.concealment == "repeat_last" and i > 0:
            prev = out[(i - 1) * unit: i * unit]
            out[lo:hi] = prev[: hi - lo]
        else:
            out[lo:hi] = 0.0
    logger.debug("network dropped %d of %d units", int(mask.sum()), n_units)
    return AudioBuffer(out, audio.sample_rate)


# ========== External codec ==========

def external_codec_passthrough(
    audio: AudioBuffer,
    command_template: Union[str, ExternalCodec],
    timeout: Optional[float] = 120.0,
) -> AudioBuffer:
    """
    Run audio through an external command via WAV files

    The result is resampled to the input rate when needed and padded or cut to
    the input length.

    Raises:
        ExternalToolError: binary missing, non-zero exit, or no output file
    """
    if isinstance(command_template, ExternalCodec):
        timeout = command_template.timeout
        command_template = command_template.command
    tokens = shlex.split(command_template)
    if not tokens:
        raise ExternalToolError("empty external codec command")
    if shutil.which(tokens[0]) is None:
        raise ExternalToolError(f"external codec not found: '{tokens[0]}' ({command_template})")

    with tempfile.TemporaryDirectory(prefix="chirppose-") as tmp:
        src = Path(tmp) / "in.wav"
        dst = Path(tmp) / "out.wav"
        wav.write_wav(audio, src)
        argv = [t.replace("{in}", str(src)).replace("{out}", str(dst)) for t in tokens]
        logger.debug("running external codec: %s", " ".join(argv))
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout)
        except (OSError, subprocess.TimeoutExpired) as e:
            raise ExternalToolError(f"external codec '{command_template}' failed: {e}") from e
        if proc.returncode != 0:
            raise ExternalToolError(
                f"external codec '{command_template}' exited with {proc.returncode}: "
                f"{proc.stderr.strip()[:200]}"
            )
        if not dst.exists():
            raise ExternalToolError(f"external codec '{command_template}' wrote no output")
        result = wav.read_wav(dst)

    samples = result.samples
    if result.sample_rate != audio.sample_rate:
        g = math.gcd(result.sample_rate, audio.sample_rate)
        samples = signal.resample_poly(samples, audio.sample_rate // g, result.sample_rate // g)
    if samples.size < len(audio):
        samples = np.concatenate([samples, np.zeros(len(audio) - samples.size)])
    return AudioBuffer(samples[: len(audio)], audio.sample_rate)


# ========== Composition ==========

def apply_channel(audio: AudioBuffer, cfg: ChannelConfig) -> AudioBuffer:
    """Codec, then network loss, then noise and gain"""
    if isinstance(cfg.codec, ExternalCodec):
        coded = external_codec_passthrough(audio, cfg.codec)
    else:
        coded = apply_codec(audio, cfg.codec)
    out = apply_network(coded, cfg.network)
    samples = out.samples
    if cfg.snr_db is not None:
        samples = add_awgn(samples, cfg.snr_db, np.random.default_rng(cfg.seed))
    if cfg.gain != 1.0:
        samples = samples * cfg.gain
    return AudioBuffer(samples, audio.sample_rate)


def measure_snr_db(reference: AudioBuffer, processed: AudioBuffer) -> float:
    """10 log10(signal / error energy); inf for an exact match"""
    ref = reference.samples
    err = ref - processed.samples[: ref.size]
    noise = float(np.sum(err ** 2))
    if noise == 0:
        return math.inf
    return 10.0 * math.log10(float(np.sum(ref ** 2)) / noise)
