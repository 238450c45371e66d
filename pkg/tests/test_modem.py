"""Modem: modulation, synchronization and the streaming decoder"""
import numpy as np
import pytest

from chirppose.corpus import SyntheticCorpusConfig, generate_poses
from chirppose.errors import ConfigError, NeedMoreData, SymbolError, UndefinedMetricError
from chirppose.modem import (
    RATE_PRESETS,
    AudioBuffer,
    DecoderState,
    ModemConfig,
    add_awgn,
    build_frame,
    build_stream,
    calibrate,
    decode_audio,
    demodulate_stream,
    demodulate_symbol,
    demodulate_symbols,
    fine_sync,
    matched_filter_detect,
    modulate,
    resolve_header,
    ser,
    ser_test,
    sync_bench,
)
from chirppose.pose_core import FRAME_SYMBOLS, FramePayload, FrameType, encode_sequence
from chirppose.wav import read_wav, write_wav

LEAD = 2000


def _payloads(n=12, seed=0):
    poses = generate_poses(SyntheticCorpusConfig(n_frames=n, seed=seed, hand_missing_prob=0.2))
    return encode_sequence(poses)


def _stream(cfg, payloads, lead=LEAD, tail=LEAD):
    audio, starts = build_stream(payloads, cfg)
    samples = np.concatenate([np.zeros(lead), audio.samples, np.zeros(tail)])
    return AudioBuffer(samples, cfg.sample_rate), [s + lead for s in starts]


def test_presets():
    """Samples per symbol and bit rate of each preset"""
    assert ModemConfig.from_preset(6).samples_per_symbol == 32
    assert ModemConfig.from_preset("3").samples_per_symbol == 64
    assert ModemConfig.from_preset(1.5).samples_per_symbol == 128
    assert ModemConfig.from_preset(6).bit_rate == 6000
    assert ModemConfig.from_preset(1.5).bit_rate == 1500
    assert set(RATE_PRESETS) == {"1.5", "3", "6"}


def test_frame_samples():
    """delimiter + preamble + header + payload"""
    cfg = ModemConfig.from_preset(6)
    assert cfg.frame_samples(FrameType.COMPLETE) == 610 + (3 + 1 + 112) * 32
    frame = build_frame(FramePayload(FrameType.JUST_BODY, np.zeros(28, dtype=int)), cfg)
    assert len(frame) == cfg.frame_samples(FrameType.JUST_BODY)


def test_invalid_configs():
    with pytest.raises(ConfigError):
        ModemConfig(modulation_order=12)
    with pytest.raises(ConfigError):
        ModemConfig(f1=30000.0)
    with pytest.raises(ConfigError):
        ModemConfig(symbol_rate=1400)
    with pytest.raises(ConfigError):
        ModemConfig.from_preset(2)
    with pytest.raises(ConfigError):
        ModemConfig(scheme="ook")


def test_calibration_is_injective():
    """Every symbol demodulates to itself"""
    for scheme in ("css", "fsk"):
        cfg = ModemConfig.from_preset(6, scheme=scheme)
        assert calibrate(cfg).css_table.shape == (16, 32)
        for v in range(16):
            assert demodulate_symbol(modulate([v], cfg).samples, cfg) == v


@pytest.mark.parametrize("rate", ["1.5", "3", "6"])
@pytest.mark.parametrize("scheme", ["css", "fsk"])
def test_clean_ser_is_zero(rate, scheme):
    cfg = ModemConfig.from_preset(rate, scheme=scheme)
    assert ser_test(cfg, 500, seed=1) == 0.0


def test_real_dechirp_clean():
    cfg = ModemConfig.from_preset(3, dechirp="real")
    assert ser_test(cfg, 300, seed=2) == 0.0


def test_symbol_errors():
    cfg = ModemConfig.from_preset(6)
    with pytest.raises(SymbolError):
        modulate([16], cfg)
    with pytest.raises(SymbolError):
        modulate([1.5], cfg)
    with pytest.raises(SymbolError):
        demodulate_symbol(np.zeros(31), cfg)


def test_silent_window_demodulates_to_zero():
    cfg = ModemConfig.from_preset(6)
    assert list(demodulate_stream(AudioBuffer.silence(64), cfg)) == [0, 0]


def test_ser_metric():
    assert ser([1, 2, 3, 4], [1, 2, 0, 4]) == 0.25
    # missing tail counts as errors
    assert ser([1, 2, 3, 4], [1, 2]) == 0.5
    with pytest.raises(UndefinedMetricError):
        ser([], [])


def test_resolve_header():
    cfg = ModemConfig()
    assert resolve_header(0, cfg) == (FrameType.COMPLETE, False)
    assert resolve_header(6, cfg) == (FrameType.DISPLACEMENT, True)
    assert resolve_header(15, cfg) == (FrameType.JUST_BODY, False)
    # cyclic distance: 15 is one step from 0
    assert resolve_header(1, cfg)[0] == FrameType.COMPLETE


def test_matched_filter_finds_delimiter():
    cfg = ModemConfig.from_preset(6)
    audio, starts = _stream(cfg, _payloads(1))
    found = matched_filter_detect(audio, cfg)
    assert found is not None
    assert abs(found.coarse_start - starts[0]) <= 2
    assert found.correlation >= cfg.detection_threshold


def test_matched_filter_silence():
    cfg = ModemConfig.from_preset(6)
    assert matched_filter_detect(AudioBuffer.silence(5000), cfg) is None


@pytest.mark.parametrize("shift", [-3, -1, 0, 2, 5])
def test_fine_sync_recovers_offset(shift):
    """Fine sync lands on the true frame start from a nearby coarse estimate"""
    cfg = ModemConfig.from_preset(6)
    audio, starts = _stream(cfg, _payloads(1))
    result = fine_sync(audio, starts[0] + shift, cfg)
    assert result.start == starts[0]
    assert result.fine_offset == -shift


def test_fine_sync_needs_more_data():
    cfg = ModemConfig.from_preset(6)
    audio, starts = _stream(cfg, _payloads(1), tail=0)
    truncated = audio.samples[: starts[0] + cfg.delimiter_length + cfg.samples_per_symbol]
    with pytest.raises(NeedMoreData):
        fine_sync(truncated, starts[0], cfg)


@pytest.mark.parametrize("rate", ["1.5", "6"])
def test_decode_clean_stream(rate):
    """Every frame of a clean stream is recovered at its start sample"""
    cfg = ModemConfig.from_preset(rate)
    payloads = _payloads()
    audio, starts = _stream(cfg, payloads)
    state = DecoderState(cfg)
    frames = decode_audio(audio, cfg, state)
    assert frames == payloads
    assert [f.start_sample for f in frames] == starts
    assert state.stats["frames_decoded"] == len(payloads)
    assert state.stats["frame_losses"] == 0


def test_decode_fsk_stream():
    cfg = ModemConfig.from_preset(6, scheme="fsk")
    payloads = _payloads(6, seed=4)
    audio, _ = _stream(cfg, payloads)
    assert decode_audio(audio, cfg) == payloads


def test_decoder_chunking_invariance():
    """Output does not depend on the chunk size"""
    cfg = ModemConfig.from_preset(6)
    audio, _ = _stream(cfg, _payloads(8, seed=1))
    whole = decode_audio(audio, cfg)
    for chunk in (333, 4800):
        state = DecoderState(cfg)
        frames = []
        for i in range(0, len(audio), chunk):
            frames += state.feed(audio.samples[i:i + chunk])
            assert state.buffered <= state.buffer_limit + chunk
        state.flush()
        assert frames == whole
        assert [f.start_sample for f in frames] == [f.start_sample for f in whole]


def test_decoder_rejects_rate_mismatch():
    state = DecoderState(ModemConfig())
    with pytest.raises(ConfigError):
        state.feed(AudioBuffer.silence(100, sample_rate=16000))


def test_sync_bench_clean():
    """Without noise every frame is detected and aligned"""
    result = sync_bench(ModemConfig.from_preset(6), snr_db=None, trials=10, seed=0)
    assert result["trials"] == 10
    assert result["detect_rate"] == 1.0
    assert result["fine_within"] == 1.0
    assert result["mean_abs_error"] <= 2


def test_sync_at_20db():
    """At 20 dB nearly every frame is aligned within two samples"""
    result = sync_bench(ModemConfig.from_preset(6), snr_db=20.0, trials=200, seed=0)
    assert result["detect_rate"] >= 0.95
    assert result["fine_within"] >= 0.95


def test_default_dechirp_is_real():
    assert ModemConfig().dechirp == "real"


@pytest.mark.parametrize("dechirp", ["real", "complex"])
def test_every_symbol_demodulates(dechirp):
    cfg = ModemConfig.from_preset(6, dechirp=dechirp)
    m = cfg.modulation_order
    blocks = modulate(np.arange(m), cfg).samples.reshape(m, -1)
    symbols, _ = demodulate_symbols(blocks, cfg)
    assert symbols.tolist() == list(range(m))


def test_symbol_survives_10db_noise():
    cfg = ModemConfig.from_preset(6)
    clean = modulate([3], cfg).samples
    rng = np.random.default_rng(0)
    blocks = np.stack([add_awgn(clean, 10.0, rng) for _ in range(1000)])
    symbols, _ = demodulate_symbols(blocks, cfg)
    assert np.mean(symbols == 3) >= 0.99


def test_destroyed_delimiter_counts_as_frame_loss():
    """A frame whose delimiter never correlates is skipped and counted"""
    cfg = ModemConfig.from_preset(6)
    rng = np.random.default_rng(3)
    n = FRAME_SYMBOLS[FrameType.JUST_BODY]
    payloads = [
        FramePayload(FrameType.JUST_BODY, rng.integers(0, cfg.modulation_order, n))
        for _ in range(3)
    ]
    audio, starts = build_stream(payloads, cfg, gap_samples=2000)
    samples = audio.samples.copy()
    lo, hi = starts[1], starts[1] + cfg.delimiter_length
    amplitude = np.max(np.abs(samples[lo:hi]))
    t = np.arange(hi - lo) / cfg.sample_rate
    samples[lo:hi] = amplitude * np.sin(2 * np.pi * 3000.0 * t)
    padded = np.concatenate([np.zeros(LEAD), samples, np.zeros(LEAD)])
    state = DecoderState(cfg)
    frames = decode_audio(AudioBuffer(padded, cfg.sample_rate), cfg, state)
    assert frames == [payloads[0], payloads[2]]
    assert state.stats["frames_decoded"] == 2
    assert state.stats["frame_losses"] >= 1


def test_wav_round_trip(tmp_path):
    """16-bit PCM keeps samples within one quantization step"""
    cfg = ModemConfig.from_preset(6)
    audio = modulate(np.arange(16), cfg)
    path = tmp_path / "tones.wav"
    write_wav(audio, path)
    back = read_wav(path)
    assert back.sample_rate == 48000
    assert len(back) == len(audio)
    assert np.max(np.abs(back.samples - audio.samples)) <= 1 / 32767
    assert list(demodulate_stream(back, cfg)) == list(range(16))
