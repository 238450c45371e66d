"""Channel emulation: MDCT codec, packet loss and external codecs"""
import math
import shutil

import numpy as np
import pytest

from chirppose.channel import (
    ChannelConfig,
    CodecSchedule,
    CodecSegment,
    ExternalCodec,
    NetworkModel,
    apply_channel,
    apply_codec,
    apply_network,
    codec_window_length,
    coded_bandwidth,
    external_codec_passthrough,
    imdct,
    mdct,
    measure_snr_db,
    network_drop_mask,
    quant_step,
    retention_fraction,
    sine_window,
)
from chirppose.errors import ConfigError, ExternalToolError
from chirppose.modem import AudioBuffer, ModemConfig, modulate


def _chirps(n_symbols=400, seed=0):
    cfg = ModemConfig.from_preset(6)
    symbols = np.random.default_rng(seed).integers(0, 16, n_symbols)
    return modulate(symbols, cfg)


def test_mdct_perfect_reconstruction():
    """Windowed MDCT with 50% overlap-add cancels time-domain aliasing"""
    length = 64
    hop = length // 2
    x = np.random.default_rng(0).normal(size=hop * 10)
    padded = np.concatenate([np.zeros(hop), x, np.zeros(2 * hop)])
    n_blocks = (padded.size - length) // hop + 1
    idx = np.arange(n_blocks)[:, None] * hop + np.arange(length)[None, :]
    w = sine_window(length)
    blocks = imdct(mdct(padded[idx] * w)) * w
    out = np.zeros_like(padded)
    for i, block in enumerate(blocks):
        out[i * hop:i * hop + length] += block
    assert np.allclose(out[hop:hop + x.size], x)


def test_codec_parameters():
    assert retention_fraction(128) == 1.0
    assert retention_fraction(64) == 0.5
    assert retention_fraction(6) == 0.125
    assert quant_step(64) == pytest.approx(0.03)
    assert codec_window_length(20, 48000) == 960
    assert codec_window_length(2.5, 48000) == 120


def _tone(freq, seconds=0.5, fs=48000):
    t = np.arange(int(seconds * fs)) / fs
    return AudioBuffer(0.8 * np.sin(2 * np.pi * freq * t), fs)


def test_coded_bandwidth():
    """Side information per hop eats into the bandwidth of short frames"""
    assert coded_bandwidth(64, 20, 48000) == pytest.approx(14125.0)
    assert coded_bandwidth(64, 10, 48000) == pytest.approx(12250.0)
    assert coded_bandwidth(64, 60, 48000) == pytest.approx(15375.0)
    assert coded_bandwidth(32, 20, 48000) == pytest.approx(8125.0)
    assert coded_bandwidth(128, 20, 48000) == 24000.0
    assert coded_bandwidth(16, 2.5, 48000) == 4000.0


def test_codec_removes_tones_above_bandwidth():
    """20 ms / 64 kbps passes 6 kHz and strips 15 kHz"""
    schedule = CodecSchedule.constant(20, 64)
    low = _tone(6000.0)
    assert measure_snr_db(low, apply_codec(low, schedule)) > 20
    high = _tone(15000.0)
    assert apply_codec(high, schedule).rms() < 0.1 * high.rms()


def test_identity_codec_copies():
    audio = _chirps(20)
    out = apply_codec(audio, None)
    assert np.array_equal(out.samples, audio.samples)
    assert out.samples is not audio.samples
    assert measure_snr_db(audio, out) == math.inf


@pytest.mark.parametrize("frame_ms", [2.5, 10.0, 20.0, 60.0])
def test_codec_preserves_length(frame_ms):
    audio = AudioBuffer(_chirps(37).samples[:-5])
    out = apply_codec(audio, CodecSchedule.constant(frame_ms, 64))
    assert len(out) == len(audio)
    assert out.sample_rate == audio.sample_rate


def test_high_bitrate_codec_is_transparent():
    """At 256 kbps every coefficient survives with a fine step"""
    audio = _chirps()
    out = apply_codec(audio, CodecSchedule.constant(20, 256))
    assert measure_snr_db(audio, out) > 30


def test_lower_bitrate_degrades():
    audio = _chirps()
    high = measure_snr_db(audio, apply_codec(audio, CodecSchedule.constant(20, 128)))
    low = measure_snr_db(audio, apply_codec(audio, CodecSchedule.constant(20, 8)))
    assert low < high


def test_schedule_boundaries():
    """Finite segments are followed in order; the last one runs to the end"""
    schedule = CodecSchedule.from_list([
        {"duration_ms": 10, "frame_ms": 10, "bitrate_kbps": 32},
        {"frame_ms": 20, "bitrate_kbps": 128},
    ])
    bounds = schedule.boundaries(48000, 48000)
    assert [(a, b) for a, b, _ in bounds] == [(0, 480), (480, 48000)]
    assert bounds[1][2].bitrate_kbps == 128
    assert ChannelConfig(codec=schedule).label == "10ms/32kbps+vbr"


def test_schedule_json(tmp_path):
    path = tmp_path / "schedule.json"
    path.write_text('{"segments": [{"duration_ms": 500, "frame_ms": 5, "bitrate_kbps": 16}]}')
    schedule = CodecSchedule.from_json(path)
    assert schedule.to_list() == [{"duration_ms": 500.0, "frame_ms": 5.0, "bitrate_kbps": 16.0}]


def test_schedule_validation():
    with pytest.raises(ConfigError):
        CodecSegment(frame_ms=1.0)
    with pytest.raises(ConfigError):
        CodecSegment(bitrate_kbps=512)
    with pytest.raises(ConfigError):
        CodecSchedule(())
    with pytest.raises(ConfigError):
        NetworkModel(loss_prob=1.5)
    with pytest.raises(ConfigError):
        NetworkModel(concealment="interpolate")


def test_drop_mask_is_seeded():
    model = NetworkModel(loss_prob=0.3, seed=11)
    a = network_drop_mask(200, model)
    b = network_drop_mask(200, model)
    assert np.array_equal(a, b)
    assert 20 < a.sum() < 100


def test_no_loss_is_identity():
    audio = _chirps(50)
    out = apply_network(audio, NetworkModel(loss_prob=0.0, seed=1))
    assert np.array_equal(out.samples, audio.samples)


def test_total_loss_zeroes_signal():
    audio = _chirps(50)
    out = apply_network(audio, NetworkModel(loss_prob=1.0, seed=1))
    assert len(out) == len(audio)
    assert not np.any(out.samples)


def test_repeat_last_concealment():
    """A dropped unit repeats the unit before it"""
    audio = AudioBuffer(np.arange(4800, dtype=float))
    model = NetworkModel(segment_ms=10, loss_prob=0.5, concealment="repeat_last", seed=3)
    mask = network_drop_mask(10, model)
    out = apply_network(audio, model)
    for i in np.flatnonzero(mask):
        if i == 0:
            assert not np.any(out.samples[:480])
        else:
            assert np.array_equal(out.samples[i * 480:(i + 1) * 480],
                                  out.samples[(i - 1) * 480:i * 480])


def test_channel_identity():
    audio = _chirps(30)
    out = apply_channel(audio, ChannelConfig.identity())
    assert np.array_equal(out.samples, audio.samples)
    assert ChannelConfig.identity().label == "identity"


def test_channel_gain_and_noise_seeded():
    audio = _chirps(30)
    cfg = ChannelConfig(codec=None, snr_db=20.0, gain=0.5, seed=4)
    a = apply_channel(audio, cfg)
    b = apply_channel(audio, cfg)
    assert np.array_equal(a.samples, b.samples)
    snr = measure_snr_db(audio, AudioBuffer(a.samples / 0.5))
    assert 18 < snr < 22


def test_with_seed_reseeds_network():
    cfg = ChannelConfig(network=NetworkModel(loss_prob=0.1)).with_seed(9)
    assert cfg.seed == 9 and cfg.network.seed == 9
    assert cfg.network.loss_prob == 0.1


def test_external_codec_missing_binary():
    audio = _chirps(5)
    with pytest.raises(ExternalToolError):
        external_codec_passthrough(audio, "definitely-not-a-codec-binary {in} {out}")
    cfg = ChannelConfig(codec=ExternalCodec("definitely-not-a-codec-binary {in} {out}"))
    assert cfg.is_external
    with pytest.raises(ExternalToolError):
        apply_channel(audio, cfg)


@pytest.mark.skipif(shutil.which("cp") is None, reason="needs cp")
def test_external_codec_copy():
    """A copy command behaves like a 16-bit PCM round trip"""
    audio = _chirps(10)
    out = external_codec_passthrough(audio, "cp {in} {out}")
    assert len(out) == len(audio)
    assert np.max(np.abs(out.samples - audio.samples)) <= 1 / 32767


@pytest.mark.skipif(shutil.which("false") is None, reason="needs false")
def test_external_codec_failure():
    with pytest.raises(ExternalToolError):
        external_codec_passthrough(_chirps(5), "false")
