"""
Pose payloads to audio and back

Transmit side: CSS (cyclic-shift chirps) or FSK symbols, assembled into
frames of

    delimiter (1 kHz sine) | 3 up-chirps | header symbol | payload symbols

Receive side: a streaming Search -> Sync -> Collect decoder. Search runs a
normalized matched filter against the delimiter, Sync aligns to the preamble
by dechirping it at every offset in [-Ns, Ns], Collect demodulates the header
and payload.

Example:
    >>> cfg = ModemConfig()
    >>> audio = build_frame(payload, cfg)
    >>> frames = decode_audio(audio, cfg)
"""
from dataclasses import dataclass, fields, replace
from enum import Enum
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy import fft as sp_fft
from scipy import signal

from .errors import ConfigError, NeedMoreData, SymbolError, UndefinedMetricError
from .pose_core import FRAME_SYMBOLS, FrameType, FramePayload, Side

logger = logging.getLogger(__name__)


SCHEMES = ("css", "fsk")
DECHIRP_MODES = ("complex", "real")

# rate (kbps) -> samples per symbol at M = 16, fs = 48 kHz
RATE_PRESETS: Dict[str, int] = {"1.5": 128, "3": 64, "6": 32}

SILENCE_POWER = 1e-8
ENERGY_RMS = 0.1
TIE_RTOL = 1e-9
SEARCH_BLOCK = 16384


# ========== Configuration ==========

@dataclass(frozen=True)
class ModemConfig:
    """
    Modem parameters

    Attributes:
        sample_rate: fs in Hz
        modulation_order: M, symbols per alphabet (power of two)
        symbol_rate: Rs in symbols/s; fs must be a multiple of it
        f0, f1: chirp band / FSK tone range in Hz
        delimiter_freq, delimiter_length: frame delimiter sine
        preamble_symbols: number of up-chirps after the delimiter
        detection_threshold: gamma, normalized correlation threshold
        scheme: 'css' or 'fsk' (header and payload; the preamble is always CSS)
        dechirp: 'real' (real reference, coherent templates) or 'complex'
            (conjugate analytic reference, magnitude templates)
        amplitude: peak amplitude of delimiter and tones
    """
    sample_rate: int = 48000
    modulation_order: int = 16
    symbol_rate: int = 1500
    f0: float = 4000.0
    f1: float = 16000.0
    delimiter_freq: float = 1000.0
    delimiter_length: int = 610
    preamble_symbols: int = 3
    detection_threshold: float = 0.6
    scheme: str = "css"
    dechirp: str = "real"
    amplitude: float = 0.8

    def __post_init__(self):
        m = self.modulation_order
        if m < 2 or m & (m - 1):
            raise ConfigError(f"modulation_order must be a power of two >= 2, got {m}")
        if self.symbol_rate <= 0 or self.sample_rate % self.symbol_rate:
            raise ConfigError(
                f"sample_rate {self.sample_rate} is not a multiple of symbol_rate {self.symbol_rate}"
            )
        if not 0 < self.f0 < self.f1:
            raise ConfigError(f"band must satisfy 0 < f0 < f1, got ({self.f0}, {self.f1})")
        if self.sample_rate < 2 * self.f1:
            raise ConfigError(f"Nyquist violated: fs={self.sample_rate} < 2*f1={2 * self.f1}")
        if not 0 < self.delimiter_freq < self.sample_rate / 2:
            raise ConfigError("delimiter frequency must lie below Nyquist")
        if self.delimiter_length < 2:
            raise ConfigError("delimiter_length must be at least 2 samples")
        if self.preamble_symbols < 1:
            raise ConfigError("preamble_symbols must be >= 1")
        if not 0.0 <= self.detection_threshold <= 1.0:
            raise ConfigError("detection_threshold must lie in [0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, got '{self.scheme}'")
        if self.dechirp not in DECHIRP_MODES:
            raise ConfigError(f"dechirp must be one of {DECHIRP_MODES}, got '{self.dechirp}'")
        if not 0 < self.amplitude <= 1.0:
            raise ConfigError("amplitude must lie in (0, 1]")

    @classmethod
    def from_preset(cls, rate_kbps: Union[str, float], **overrides) -> "ModemConfig":
        """
        Config for a data-rate preset (1.5, 3 or 6 kbps)

        Example:
            >>> ModemConfig.from_preset(3).samples_per_symbol
            64
        """
        key = f"{float(rate_kbps):g}"
        if key not in RATE_PRESETS:
            raise ConfigError(f"unknown rate preset {rate_kbps}; choose from {list(RATE_PRESETS)}")
        fs = int(overrides.get("sample_rate", cls.sample_rate))
        overrides["symbol_rate"] = fs // RATE_PRESETS[key]
        return create_modem_config(**overrides)

    @property
    def samples_per_symbol(self) -> int:
        return self.sample_rate // self.symbol_rate

    @property
    def bits_per_symbol(self) -> int:
        return int(math.log2(self.modulation_order))

    @property
    def bit_rate(self) -> float:
        """R_b = R_s * log2(M), payload bits per second"""
        return float(self.symbol_rate * self.bits_per_symbol)

    @property
    def symbol_duration(self) -> float:
        return self.samples_per_symbol / self.sample_rate

    @property
    def bandwidth(self) -> float:
        return self.f1 - self.f0

    @property
    def header_symbols(self) -> Dict[FrameType, int]:
        """Maximally separated code points round(i * (M - 1) / 3)"""
        m = self.modulation_order
        return {ft: int(round(i * (m - 1) / 3)) for i, ft in enumerate(FrameType)}

    def frame_samples(self, frame_type: FrameType) -> int:
        symbols = self.preamble_symbols + 1 + FRAME_SYMBOLS[FrameType(frame_type)]
        return self.delimiter_length + symbols * self.samples_per_symbol

    @property
    def max_frame_samples(self) -> int:
        return max(self.frame_samples(ft) for ft in FrameType)

    @property
    def framed_pose_rate(self) -> float:
        """Complete frames per second including delimiter/preamble/header"""
        return self.sample_rate / self.frame_samples(FrameType.COMPLETE)

    @property
    def payload_pose_rate(self) -> float:
        """Complete poses per second counting payload symbols only"""
        return self.symbol_rate / FRAME_SYMBOLS[FrameType.COMPLETE]


def create_modem_config(**kwargs) -> ModemConfig:
    """
    Create a ModemConfig from keyword overrides

    Unknown keys are reported and ignored.
    """
    known = {f.name for f in fields(ModemConfig)}
    for key in sorted(set(kwargs) - known):
        logger.warning("Unknown modem config parameter '%s'", key)
    return ModemConfig(**{k: v for k, v in kwargs.items() if k in known})


# ========== Audio ==========

@dataclass(eq=False)
class AudioBuffer:
    """Mono PCM samples (float, nominally in [-1, 1]) at a fixed rate"""
    samples: np.ndarray
    sample_rate: int = 48000

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).reshape(-1)
        self.sample_rate = int(self.sample_rate)

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def rms(self) -> float:
        if not len(self):
            return 0.0
        return float(np.sqrt(np.mean(self.samples ** 2)))

    def copy(self) -> "AudioBuffer":
        return AudioBuffer(self.samples.copy(), self.sample_rate)

    @classmethod
    def silence(cls, n: int, sample_rate: int = 48000) -> "AudioBuffer":
        return cls(np.zeros(int(n)), sample_rate)

    @classmethod
    def concatenate(cls, buffers: Sequence["AudioBuffer"]) -> "AudioBuffer":
        if not buffers:
            raise ConfigError("nothing to concatenate")
        rates = {b.sample_rate for b in buffers}
        if len(rates) != 1:
            raise ConfigError(f"sample rates differ: {sorted(rates)}")
        return cls(np.concatenate([b.samples for b in buffers]), rates.pop())

    def __repr__(self) -> str:
        return f"<AudioBuffer samples={len(self)} rate={self.sample_rate}>"


# ========== Waveforms and calibration ==========

def chirp_phase(value: int, cfg: ModemConfig) -> np.ndarray:
    """
    Instantaneous phase of the cyclic-shift chirp for one symbol

    The frequency starts at f0 + B*v/M, sweeps up at B/Ts and wraps back to f0
    when it reaches f1.
    """
    ns = cfg.samples_per_symbol
    t = np.arange(ns) / cfg.sample_rate
    ts = cfg.symbol_duration
    b = cfg.bandwidth
    start = cfg.f0 + b * value / cfg.modulation_order
    phase = 2 * np.pi * (start * t + b * t ** 2 / (2 * ts))
    t_wrap = ts * (1 - value / cfg.modulation_order)
    return np.where(t >= t_wrap, phase - 2 * np.pi * b * (t - t_wrap), phase)


def delimiter_waveform(cfg: ModemConfig) -> np.ndarray:
    n = np.arange(cfg.delimiter_length)
    return cfg.amplitude * np.sin(2 * np.pi * cfg.delimiter_freq * n / cfg.sample_rate)


def fsk_frequencies(cfg: ModemConfig) -> np.ndarray:
    m = cfg.modulation_order
    return cfg.f0 + np.arange(m) * (cfg.f1 - cfg.f0) / (m - 1)


@dataclass(frozen=True, eq=False)
class ModemCalibration:
    """
    Waveform tables and decision templates derived once per config

    Attributes:
        css_table: (M, Ns) CSS symbol waveforms, each at RMS amplitude/sqrt(2)
        fsk_table: (M, Ns) FSK tone waveforms
        reference: reference up-chirp (complex analytic or real)
        templates: (M, 2*Ns) unit-norm spectra of dechirped symbols; complex
            values matched coherently for real dechirp, magnitudes for complex
        peak_bins: argmax FFT bin of each dechirped symbol (diagnostics)
        tone_basis: (M, Ns) complex exponentials at the FSK tone frequencies
        delimiter: delimiter waveform
    """
    css_table: np.ndarray
    fsk_table: np.ndarray
    reference: np.ndarray
    templates: np.ndarray
    peak_bins: np.ndarray
    tone_basis: np.ndarray
    delimiter: np.ndarray

    @property
    def nfft(self) -> int:
        return self.templates.shape[1]


def _dechirp(samples: np.ndarray, reference: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(reference):
        return samples * np.conj(reference)
    return samples * reference


def _dechirped_spectra(samples: np.ndarray, reference: np.ndarray, nfft: int,
                       coherent: bool) -> np.ndarray:
    spectra = sp_fft.fft(_dechirp(samples, reference), n=nfft, axis=1)
    return spectra if coherent else np.abs(spectra)


def _template_scores(spectra: np.ndarray, templates: np.ndarray) -> np.ndarray:
    # real-valued for coherent templates of real signals (Parseval)
    if np.iscomplexobj(templates):
        return np.real(spectra @ np.conj(templates).T)
    return spectra @ templates.T


@lru_cache(maxsize=32)
def calibrate(cfg: ModemConfig) -> ModemCalibration:
    """
    Build symbol tables and verify the CSS decision is injective

    Raises:
        ConfigError: two symbols map to the same decision
    """
    m, ns = cfg.modulation_order, cfg.samples_per_symbol
    target_rms = cfg.amplitude / np.sqrt(2.0)

    css = np.empty((m, ns))
    for v in range(m):
        wave = np.cos(chirp_phase(v, cfg))
        css[v] = wave * (target_rms / np.sqrt(np.mean(wave ** 2)))

    t = np.arange(ns) / cfg.sample_rate
    freqs = fsk_frequencies(cfg)
    fsk = cfg.amplitude * np.cos(2 * np.pi * freqs[:, None] * t[None, :])
    tone_basis = np.exp(-2j * np.pi * freqs[:, None] * t[None, :])

    phase0 = chirp_phase(0, cfg)
    reference = np.exp(1j * phase0) if cfg.dechirp == "complex" else np.cos(phase0)

    # real products: magnitude spectra of v and M - v coincide
    nfft = 2 * ns
    spectra = _dechirped_spectra(css, reference, nfft, coherent=cfg.dechirp == "real")
    norms = np.linalg.norm(spectra, axis=1, keepdims=True)
    templates = spectra / np.where(norms > 0, norms, 1.0)

    decisions = np.argmax(_template_scores(spectra, templates), axis=1)
    if not np.array_equal(decisions, np.arange(m)):
        clash = [int(v) for v in np.flatnonzero(decisions != np.arange(m))]
        raise ConfigError(f"CSS symbols {clash} are not separable with this configuration")

    calib = ModemCalibration(
        css_table=css,
        fsk_table=fsk,
        reference=reference,
        templates=templates,
        peak_bins=np.argmax(np.abs(spectra), axis=1),
        tone_basis=tone_basis,
        delimiter=delimiter_waveform(cfg),
    )
    logger.debug("calibrated %s modem: M=%d Ns=%d peak bins %s",
                 cfg.scheme, m, ns, calib.peak_bins.tolist())
    return calib


# ========== Modulation ==========

def _check_symbols(symbols: Sequence[int], cfg: ModemConfig) -> np.ndarray:
    arr = np.asarray(symbols)
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise SymbolError("symbols must be integers")
    arr = arr.astype(np.int64).reshape(-1)
    if np.any(arr < 0) or np.any(arr >= cfg.modulation_order):
        raise SymbolError(f"symbols must lie in [0, {cfg.modulation_order - 1}]")
    return arr


def modulate_css(symbols: Sequence[int], cfg: ModemConfig) -> AudioBuffer:
    """Emit Ns samples of the cyclic-shift chirp per symbol"""
    arr = _check_symbols(symbols, cfg)
    table = calibrate(cfg).css_table
    return AudioBuffer(table[arr].reshape(-1), cfg.sample_rate)


def modulate_fsk(symbols: Sequence[int], cfg: ModemConfig) -> AudioBuffer:
    """Emit Ns samples of the tone f0 + v*(f1 - f0)/(M - 1) per symbol"""
    arr = _check_symbols(symbols, cfg)
    table = calibrate(cfg).fsk_table
    return AudioBuffer(table[arr].reshape(-1), cfg.sample_rate)


def modulate(symbols: Sequence[int], cfg: ModemConfig) -> AudioBuffer:
    if cfg.scheme == "fsk":
        return modulate_fsk(symbols, cfg)
    return modulate_css(symbols, cfg)


def build_frame(payload: FramePayload, cfg: ModemConfig) -> AudioBuffer:
    """
    Assemble delimiter + preamble + header + payload

    The preamble is always CSS up-chirps; header and payload use cfg.scheme.
    """
    calib = calibrate(cfg)
    header = cfg.header_symbols[payload.frame_type]
    preamble = np.tile(calib.css_table[0], cfg.preamble_symbols)
    body = modulate(np.concatenate([[header], payload.symbols]), cfg)
    return AudioBuffer(
        np.concatenate([calib.delimiter, preamble, body.samples]), cfg.sample_rate
    )


def build_stream(
    payloads: Sequence[FramePayload],
    cfg: ModemConfig,
    gap_samples: int = 0,
) -> Tuple[AudioBuffer, List[int]]:
    """
    Concatenate frames back to back

    Returns:
        (audio, start sample of every frame)
    """
    parts, starts, pos = [], [], 0
    for payload in payloads:
        frame = build_frame(payload, cfg).samples
        starts.append(pos)
        parts.append(frame)
        pos += frame.size
        if gap_samples:
            parts.append(np.zeros(gap_samples))
            pos += gap_samples
    samples = np.concatenate(parts) if parts else np.zeros(0)
    return AudioBuffer(samples, cfg.sample_rate), starts


# ========== Demodulation ==========

def demodulate_symbols(
    blocks: np.ndarray,
    cfg: ModemConfig,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Vectorised demodulation of an (n, Ns) array of symbol windows

    Returns:
        (symbols, confidences); an all-zero window yields symbol 0 with
        confidence 0
    """
    blocks = np.atleast_2d(np.asarray(blocks, dtype=np.float64))
    ns = cfg.samples_per_symbol
    if blocks.shape[1] != ns:
        raise SymbolError(f"expected {ns} samples per symbol, got {blocks.shape[1]}")
    calib = calibrate(cfg)
    if cfg.scheme == "fsk":
        scores = np.abs(blocks @ calib.tone_basis.T)
    else:
        coherent = np.iscomplexobj(calib.templates)
        spectra = _dechirped_spectra(blocks, calib.reference, calib.nfft, coherent)
        scores = _template_scores(spectra, calib.templates)
    symbols = np.argmax(scores, axis=1)
    return symbols.astype(np.int64), scores[np.arange(len(symbols)), symbols]


def demodulate_symbol(samples: np.ndarray, cfg: ModemConfig) -> int:
    """Demodulate exactly one symbol window of Ns samples"""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.size != cfg.samples_per_symbol:
        raise SymbolError(
            f"expected {cfg.samples_per_symbol} samples, got {samples.size}"
        )
    symbols, _ = demodulate_symbols(samples[None, :], cfg)
    return int(symbols[0])


def demodulate_stream(audio: AudioBuffer, cfg: ModemConfig) -> np.ndarray:
    """Demodulate a symbol-aligned stream (trailing partial symbol ignored)"""
    ns = cfg.samples_per_symbol
    n = len(audio) // ns
    symbols, _ = demodulate_symbols(audio.samples[: n * ns].reshape(n, ns), cfg)
    return symbols


# ========== Synchronization ==========

@dataclass(frozen=True)
class SyncResult:
    """
    Attributes:
        coarse_start: matched-filter estimate of the delimiter start
        fine_offset: preamble alignment k* relative to coarse_start
        score: S(k*), summed zero-bin magnitude over the preamble
        correlation: matched-filter peak (normalized)
    """
    coarse_start: int
    fine_offset: int = 0
    score: float = 0.0
    correlation: float = 0.0

    @property
    def start(self) -> int:
        """Estimated frame (delimiter) start"""
        return self.coarse_start + self.fine_offset


def normalized_correlation(samples: np.ndarray, delimiter: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Matched filter normalized to a correlation coefficient

    Returns:
        (rho, window_rms) for every full window; windows with mean power
        below 1e-8 get rho = 0
    """
    length = delimiter.size
    if samples.size < length:
        return np.zeros(0), np.zeros(0)
    corr = signal.correlate(samples, delimiter, mode="valid", method="direct")
    energy = signal.correlate(samples * samples, np.ones(length), mode="valid", method="direct")
    energy = np.maximum(energy, 0.0)
    norm = np.linalg.norm(delimiter) * np.sqrt(energy)
    quiet = energy / length < SILENCE_POWER
    rho = np.where(quiet, 0.0, corr / np.where(quiet, 1.0, norm))
    return np.clip(rho, -1.0, 1.0), np.sqrt(energy / length)


def _exceedance_peak(rho: np.ndarray, threshold: float, bridge: int) -> Optional[int]:
    hits = np.flatnonzero(rho >= threshold)
    if hits.size == 0:
        return None
    gaps = np.flatnonzero(np.diff(hits) > bridge)
    end = hits[gaps[0]] if gaps.size else hits[-1]
    start = hits[0]
    return int(start + np.argmax(rho[start:end + 1]))


def matched_filter_detect(audio: AudioBuffer, cfg: ModemConfig) -> Optional[SyncResult]:
    """
    Earliest delimiter detection in a buffer

    The exceedance region starts at the first rho >= gamma and extends while
    exceedances recur within one delimiter length; the estimate is its argmax.
    Returns None when nothing crosses the threshold.
    """
    calib = calibrate(cfg)
    rho, _ = normalized_correlation(audio.samples, calib.delimiter)
    t0 = _exceedance_peak(rho, cfg.detection_threshold, cfg.delimiter_length)
    if t0 is None:
        return None
    return SyncResult(coarse_start=t0, correlation=float(rho[t0]))


def _zero_bin(windows: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return np.abs(np.sum(_dechirp(windows, reference), axis=-1))


def fine_sync_scores(samples: np.ndarray, t0: int, cfg: ModemConfig) -> Tuple[np.ndarray, np.ndarray]:
    """
    S(k) for k in [-Ns, Ns] and the zero-bin magnitude of the window before
    the preamble

    Raises:
        NeedMoreData: a window extends past the buffer
    """
    ns = cfg.samples_per_symbol
    calib = calibrate(cfg)
    offsets = np.arange(-ns, ns + 1)
    first = t0 + cfg.delimiter_length - ns + offsets[0]
    last = t0 + cfg.delimiter_length + offsets[-1] + cfg.preamble_symbols * ns
    if first < 0:
        raise NeedMoreData(needed=-first, available=0)
    if last > samples.size:
        raise NeedMoreData(needed=last, available=samples.size)
    m = np.arange(-1, cfg.preamble_symbols)
    starts = t0 + cfg.delimiter_length + offsets[:, None] + m[None, :] * ns
    windows = samples[starts[..., None] + np.arange(ns)]
    mags = _zero_bin(windows, calib.reference)
    return mags[:, 1:].sum(axis=1), mags[:, 0]


def fine_sync(audio: Union[AudioBuffer, np.ndarray], t0: int, cfg: ModemConfig,
              correlation: float = 0.0) -> SyncResult:
    """
    Align to the preamble around the coarse estimate

    k* maximizes S(k); ties go to the lowest zero-bin magnitude of the window
    before the preamble, then to the smallest |k| (negative first).
    """
    samples = audio.samples if isinstance(audio, AudioBuffer) else np.asarray(audio)
    ns = cfg.samples_per_symbol
    scores, pre = fine_sync_scores(samples, t0, cfg)
    offsets = np.arange(-ns, ns + 1)
    best = scores.max()
    tied = np.flatnonzero(scores >= best - TIE_RTOL * max(best, 1.0))
    order = sorted(tied, key=lambda i: (pre[i], abs(offsets[i]), offsets[i]))
    # pre-window magnitudes of tied offsets may themselves be near-equal
    lowest = pre[order[0]]
    near = [i for i in order if pre[i] <= lowest + TIE_RTOL * max(lowest, 1.0)]
    k_idx = min(near, key=lambda i: (abs(offsets[i]), offsets[i]))
    return SyncResult(
        coarse_start=int(t0),
        fine_offset=int(offsets[k_idx]),
        score=float(scores[k_idx]),
        correlation=float(correlation),
    )


def resolve_header(symbol: int, cfg: ModemConfig) -> Tuple[Optional[FrameType], bool]:
    """
    Map a demodulated header to the nearest code point (cyclic distance)

    Returns:
        (frame type or None on a tie, whether a correction was applied)
    """
    m = cfg.modulation_order
    dists = {}
    for ft, code in cfg.header_symbols.items():
        d = abs(int(symbol) - code)
        dists[ft] = min(d, m - d)
    nearest = min(dists.values())
    winners = [ft for ft, d in dists.items() if d == nearest]
    if len(winners) > 1:
        return None, False
    return winners[0], nearest > 0


# ========== Streaming decoder ==========

class Phase(Enum):
    SEARCH = "search"
    SYNC = "sync"
    COLLECT = "collect"


@dataclass
class _Region:
    start: int
    best: int
    best_val: float
    last: int


class _EnergyRuns:
    """Tracks runs of energetic search windows that never led to a detection"""

    def __init__(self, min_run: int, exclude: int):
        self.min_run = min_run
        self.exclude = exclude
        self.run_start: Optional[int] = None
        self.accounted = False
        self.accounted_from: Optional[int] = None

    def feed(self, energetic: np.ndarray, first: int) -> int:
        """Consume flags for indices first.. ; returns number of orphan runs closed"""
        orphans = 0
        if energetic.size == 0:
            return 0
        flags = energetic.astype(np.int8)
        prev = 1 if self.run_start is not None else 0
        edges = np.diff(np.concatenate([[prev], flags]))
        for pos in np.flatnonzero(edges):
            idx = first + int(pos)
            if edges[pos] > 0:
                self.run_start = idx
                self.accounted = self.accounted_from == idx
            else:
                orphans += self._close(idx)
        self.accounted_from = None
        return orphans

    def _close(self, end: int) -> int:
        start, self.run_start = self.run_start, None
        if start is None or self.accounted:
            return 0
        return int(end - start >= self.min_run)

    def on_detection(self, index: int) -> int:
        return self._close(index - self.exclude) if self.run_start is not None else 0

    def resume(self, index: int, accounted: bool) -> None:
        self.run_start = None
        self.accounted = False
        self.accounted_from = index if accounted else None

    def flush(self, end: int) -> int:
        return self._close(end) if self.run_start is not None else 0


class DecoderState:
    """
    Single-stream receiver (Search -> Sync -> Collect)

    Feed audio chunks of any size in order; completed frames are returned as
    FramePayload objects carrying their SyncResult and absolute start sample.
    The output does not depend on how the stream is chunked.

    Statistics:
        frames_decoded, frame_losses, header_corrections, overflow_drops,
        orphan_frames (energetic audio that passed without a detection)
    """

    def __init__(self, cfg: ModemConfig):
        self.cfg = cfg
        self._calib = calibrate(cfg)
        self.phase = Phase.SEARCH
        self._buffer = np.zeros(0)
        self._base = 0
        self._next = 0
        self._region: Optional[_Region] = None
        self._t0 = 0
        self._correlation = 0.0
        self._sync: Optional[SyncResult] = None
        self._frame_type: Optional[FrameType] = None
        self._payload_start = 0
        self.expected_symbols = 0
        min_run = (cfg.preamble_symbols + 1 + min(FRAME_SYMBOLS.values())) * cfg.samples_per_symbol
        self._runs = _EnergyRuns(min_run, cfg.delimiter_length)

        self.frames_decoded = 0
        self.frame_losses = 0
        self.header_corrections = 0
        self.overflow_drops = 0
        self.orphan_frames = 0

    @property
    def buffer_limit(self) -> int:
        return self.cfg.max_frame_samples + self.cfg.delimiter_length

    @property
    def buffered(self) -> int:
        return int(self._buffer.size)

    @property
    def stats(self) -> Dict[str, int]:
        return {
            "frames_decoded": self.frames_decoded,
            "frame_losses": self.frame_losses,
            "header_corrections": self.header_corrections,
            "overflow_drops": self.overflow_drops,
            "orphan_frames": self.orphan_frames,
        }

    @property
    def _end(self) -> int:
        return self._base + self._buffer.size

    def feed(self, chunk: Union[AudioBuffer, np.ndarray]) -> List[FramePayload]:
        if isinstance(chunk, AudioBuffer):
            if chunk.sample_rate != self.cfg.sample_rate:
                raise ConfigError(
                    f"chunk rate {chunk.sample_rate} != modem rate {self.cfg.sample_rate}"
                )
            chunk = chunk.samples
        chunk = np.asarray(chunk, dtype=np.float64).reshape(-1)
        if chunk.size:
            self._buffer = np.concatenate([self._buffer, chunk])

        frames: List[FramePayload] = []
        while True:
            if self.phase == Phase.SEARCH:
                if not self._search():
                    break
            elif self.phase == Phase.SYNC:
                if not self._synchronize():
                    break
            else:
                frame = self._collect()
                if frame is None:
                    break
                frames.append(frame)
        self._trim()
        return frames

    def flush(self) -> None:
        """End of stream: settle a pending run of undetected energy"""
        if self.phase == Phase.SEARCH and self._region is None:
            self._count_orphans(self._runs.flush(self._next))

    def _count_orphans(self, n: int) -> None:
        if n:
            self.orphan_frames += n
            self.frame_losses += n
            logger.debug("frame lost: energetic audio without delimiter before sample %d",
                         self._next)

    def _search(self) -> bool:
        length = self.cfg.delimiter_length
        gamma = self.cfg.detection_threshold
        while True:
            available = self._end - self._next - length + 1
            if available <= 0:
                return False
            lo = self._next - self._base
            seg = self._buffer[lo: lo + min(available, SEARCH_BLOCK) + length - 1]
            rho, rms = normalized_correlation(seg, self._calib.delimiter)
            energetic = rms >= ENERGY_RMS
            first, n, pos = self._next, rho.size, 0

            while pos < n:
                region = self._region
                if region is None:
                    hits = np.flatnonzero(rho[pos:] >= gamma)
                    if hits.size == 0:
                        self._count_orphans(self._runs.feed(energetic[pos:], first + pos))
                        pos = n
                        break
                    h = pos + int(hits[0])
                    self._count_orphans(self._runs.feed(energetic[pos:h], first + pos))
                    self._count_orphans(self._runs.on_detection(first + h))
                    self._region = _Region(first + h, first + h, float(rho[h]), first + h)
                    pos = h + 1
                    continue

                close_at = region.last + length
                stop = min(n, close_at - first + 1)
                hits = np.flatnonzero(rho[pos:stop] >= gamma)
                if hits.size:
                    vals = rho[pos + hits]
                    j = int(np.argmax(vals))
                    if vals[j] > region.best_val:
                        region.best = first + pos + int(hits[j])
                        region.best_val = float(vals[j])
                    region.last = first + pos + int(hits[-1])
                    pos = region.last + 1 - first
                    if region.last - region.start > self.buffer_limit:
                        self._overflow(region.last + 1)
                    continue
                pos = stop
                if first + pos - 1 >= close_at:
                    self._t0 = region.best
                    self._correlation = region.best_val
                    self._region = None
                    self.phase = Phase.SYNC
                    self._next = self._t0
                    logger.debug("delimiter at sample %d (rho=%.3f)", self._t0, self._correlation)
                    return True

            self._next = first + pos

    def _overflow(self, resume: int) -> None:
        self.frame_losses += 1
        self.overflow_drops += 1
        self._region = None
        self._next = resume
        self._runs.resume(resume, accounted=True)
        logger.debug("decoder overflow: dropped data before sample %d", resume)

    def _drop_frame(self, resume: int) -> None:
        self.frame_losses += 1
        self.phase = Phase.SEARCH
        self._next = resume
        self._runs.resume(resume, accounted=True)

    def _synchronize(self) -> bool:
        cfg = self.cfg
        ns = cfg.samples_per_symbol
        need = self._t0 + cfg.delimiter_length + (cfg.preamble_symbols + 2) * ns
        if self._end < need:
            return False
        try:
            rel = fine_sync(self._buffer, self._t0 - self._base, cfg, self._correlation)
        except NeedMoreData:
            return False
        sync = replace(rel, coarse_start=self._t0)
        header_at = sync.start + cfg.delimiter_length + cfg.preamble_symbols * ns
        window = self._buffer[header_at - self._base: header_at - self._base + ns]
        symbol = demodulate_symbol(window, cfg)
        frame_type, corrected = resolve_header(symbol, cfg)
        if frame_type is None:
            logger.debug("frame lost: ambiguous header %d at sample %d", symbol, header_at)
            self._drop_frame(self._t0 + cfg.delimiter_length)
            return True
        if corrected:
            self.header_corrections += 1
            logger.debug("header %d corrected to %s", symbol, frame_type.name)
        self._sync = sync
        self._frame_type = frame_type
        self._payload_start = header_at + ns
        self.expected_symbols = FRAME_SYMBOLS[frame_type]
        self.phase = Phase.COLLECT
        return True

    def _collect(self) -> Optional[FramePayload]:
        ns = self.cfg.samples_per_symbol
        end = self._payload_start + self.expected_symbols * ns
        if self._end < end:
            return None
        lo = self._payload_start - self._base
        blocks = self._buffer[lo: lo + self.expected_symbols * ns].reshape(-1, ns)
        symbols, _ = demodulate_symbols(blocks, self.cfg)
        side = None
        if self._frame_type == FrameType.ONE_HAND:
            side = Side.LEFT if int(symbols[0]) < 8 else Side.RIGHT
        assert self._sync is not None and self._frame_type is not None
        frame = FramePayload(
            self._frame_type, symbols, side, sync=self._sync, start_sample=self._sync.start
        )
        self.frames_decoded += 1
        logger.debug("decoded %s frame at sample %d", self._frame_type.name, self._sync.start)
        self.phase = Phase.SEARCH
        self._next = end
        self._runs.resume(end, accounted=False)
        return frame

    def _trim(self) -> None:
        if self.phase == Phase.SEARCH:
            keep = self._next if self._region is None else min(self._next, self._region.best)
        else:
            keep = self._t0
        keep = max(self._base, min(keep, self._end))
        if keep > self._base:
            self._buffer = self._buffer[keep - self._base:]
            self._base = keep

    def __repr__(self) -> str:
        return f"<DecoderState phase={self.phase.value} buffered={self.buffered}>"


def decode_stream(state: DecoderState, chunk: Union[AudioBuffer, np.ndarray]) -> List[FramePayload]:
    """Feed one chunk to a decoder; returns the frames it completed"""
    return state.feed(chunk)


def decode_audio(audio: AudioBuffer, cfg: ModemConfig,
                 state: Optional[DecoderState] = None) -> List[FramePayload]:
    """Single-shot decode of a whole buffer"""
    state = state or DecoderState(cfg)
    frames = state.feed(audio)
    state.flush()
    return frames


# ========== Error rates and benchmarks ==========

def ser(sent: Sequence[int], received: Sequence[int]) -> float:
    """
    Symbol error rate; a length mismatch counts the missing tail as errors

    Raises:
        UndefinedMetricError: both sequences empty
    """
    a = np.asarray(sent, dtype=np.int64).reshape(-1)
    b = np.asarray(received, dtype=np.int64).reshape(-1)
    total = max(a.size, b.size)
    if total == 0:
        raise UndefinedMetricError("SER of two empty sequences")
    common = min(a.size, b.size)
    errors = int(np.count_nonzero(a[:common] != b[:common])) + (total - common)
    return errors / total


def add_awgn(samples: np.ndarray, snr_db: float, rng: np.random.Generator,
             reference_power: Optional[float] = None) -> np.ndarray:
    """Add white Gaussian noise at snr_db relative to the signal power"""
    power = float(np.mean(samples ** 2)) if reference_power is None else reference_power
    if power <= 0:
        return samples.copy()
    sigma = np.sqrt(power / 10 ** (snr_db / 10))
    return samples + rng.normal(0.0, sigma, size=samples.shape)


def ser_test(
    cfg: ModemConfig,
    n_symbols: int = 10000,
    channel: Optional[Callable[[AudioBuffer], AudioBuffer]] = None,
    seed: Optional[int] = None,
) -> float:
    """
    Symbol-aligned SER of random symbols through an optional channel
    """
    rng = np.random.default_rng(seed)
    symbols = rng.integers(0, cfg.modulation_order, size=n_symbols)
    audio = modulate(symbols, cfg)
    if channel is not None:
        audio = channel(audio)
    return ser(symbols, demodulate_stream(audio, cfg))


def sync_bench(
    cfg: ModemConfig,
    snr_db: Optional[float] = 20.0,
    trials: int = 200,
    seed: Optional[int] = None,
    tolerance: int = 2,
) -> Dict[str, float]:
    """
    Monte-Carlo synchronization benchmark

    Each trial places one random JustBody frame at a random offset in silence,
    adds white noise (relative to the frame power) and runs detection and
    fine sync.

    Returns:
        detect_rate, coarse_within, fine_within (fractions within `tolerance`
        samples of truth) and mean_abs_error of the fine estimate
    """
    rng = np.random.default_rng(seed)
    lead = 4 * cfg.delimiter_length
    detected = coarse_ok = fine_ok = 0
    errors = []
    for _ in range(trials):
        symbols = rng.integers(0, cfg.modulation_order, size=FRAME_SYMBOLS[FrameType.JUST_BODY])
        frame = build_frame(FramePayload(FrameType.JUST_BODY, symbols), cfg).samples
        offset = int(rng.integers(cfg.delimiter_length, lead))
        samples = np.zeros(lead + frame.size + cfg.delimiter_length)
        samples[offset: offset + frame.size] = frame
        if snr_db is not None:
            samples = add_awgn(samples, snr_db, rng, float(np.mean(frame ** 2)))
        coarse = matched_filter_detect(AudioBuffer(samples, cfg.sample_rate), cfg)
        if coarse is None:
            continue
        detected += 1
        coarse_ok += abs(coarse.coarse_start - offset) <= tolerance
        try:
            fine = fine_sync(samples, coarse.coarse_start, cfg, coarse.correlation)
        except NeedMoreData:
            continue
        err = abs(fine.start - offset)
        errors.append(err)
        fine_ok += err <= tolerance
    n = max(trials, 1)
    return {
        "trials": float(trials),
        "detect_rate": detected / n,
        "coarse_within": coarse_ok / n,
        "fine_within": fine_ok / n,
        "mean_abs_error": float(np.mean(errors)) if errors else float("nan"),
    }
