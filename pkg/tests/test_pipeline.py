"""End-to-end pipeline over an identity channel"""
import json

import numpy as np
import pytest

from chirppose.channel import ChannelConfig, ExternalCodec
from chirppose.corpus import SyntheticCorpusConfig, generate_poses
from chirppose.errors import ConfigError, StageError
from chirppose.modem import FramePayload, ModemConfig
from chirppose.pipeline import (
    PipelineConfig,
    align_frames,
    encode_poses,
    receive,
    run_pipeline,
    stage,
    transmit_pairs,
)

# one quantization step (1/127) across half the 1280 px width
HALF_STEP_PX = 1280 / 254


def _cfg(**kwargs):
    params = dict(channel=ChannelConfig.identity(), corpus=SyntheticCorpusConfig(n_frames=20, seed=3))
    params.update(kwargs)
    return PipelineConfig(**params)


def test_identity_channel_is_lossless():
    """Every frame arrives; error on transmitted joints is quantization only"""
    report = run_pipeline(_cfg())
    assert report.frames_sent == 20
    assert report.frames_received == 20
    assert report.frames_dropped == 0
    assert report.ser == 0.0
    assert report.joint_error["transmitted_mean_px"] <= HALF_STEP_PX
    assert report.settings["hand_model"] == "interpolation"
    assert report.settings["detector"] is False
    assert report.detector is None
    assert report.predictor is not None
    assert report.decoder["orphan_displacements"] == 0


def test_report_is_deterministic(tmp_path):
    a = run_pipeline(_cfg(output=tmp_path / "a"))
    b = run_pipeline(_cfg(output=tmp_path / "b"))
    assert a == b
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
    assert (tmp_path / "a" / "summary.txt").exists()
    doc = json.loads((tmp_path / "a" / "report.json").read_text())
    assert doc["frames_sent"] == 20
    assert "runtime" not in doc
    assert set(a.runtime) == {"load", "encode", "channel", "decode", "render", "metrics"}


def test_render_writes_frames(tmp_path):
    run_pipeline(_cfg(output=tmp_path, render=True, corpus=SyntheticCorpusConfig(n_frames=3)))
    index = json.loads((tmp_path / "frames" / "index.json").read_text())
    assert len(index["frames"]) == 3


def test_failing_stage_is_named():
    cfg = _cfg(channel=ChannelConfig(codec=ExternalCodec("definitely-not-a-codec-binary {in} {out}")))
    with pytest.raises(StageError) as info:
        run_pipeline(cfg)
    assert info.value.stage == "channel"


def test_stage_records_runtime():
    runtime = {}
    with pytest.raises(StageError):
        with stage("boom", runtime):
            raise ValueError("bad")
    assert "boom" in runtime


def test_receive_matches_sender_starts():
    modem = ModemConfig.from_preset(3)
    poses = generate_poses(SyntheticCorpusConfig(n_frames=5, seed=1))
    audio, payloads, starts = encode_poses(poses, modem)
    frames, state = receive(audio, modem, chunk_samples=1000)
    assert [f.start_sample for f in frames] == starts
    assert frames == payloads
    assert align_frames(frames, starts, modem.samples_per_symbol // 2) == [0, 1, 2, 3, 4]


def test_align_frames_tolerance():
    frames = [FramePayload(0, [], start_sample=s) for s in (102, 500, 510, None)]
    assert align_frames(frames, [100, 505], tolerance=8) == [0, 1, None, None]


def test_transmit_pairs():
    pairs = transmit_pairs(_cfg(corpus=SyntheticCorpusConfig(n_frames=6)))
    assert len(pairs) == 6
    sent, received = pairs[0]
    assert np.allclose(sent.keypoints[:, :2], received.keypoints[:, :2], atol=1 / 254 + 1e-9)


def test_config_validation(tmp_path):
    with pytest.raises(ConfigError):
        PipelineConfig(rate_kbps=2.0)
    with pytest.raises(ConfigError):
        PipelineConfig(rate_kbps=6.0, modem=ModemConfig.from_preset(1.5))
    with pytest.raises(ConfigError):
        PipelineConfig(input=tmp_path / "missing.jsonl")
    with pytest.raises(ConfigError):
        PipelineConfig(chunk_samples=0)
    with pytest.raises(ConfigError):
        PipelineConfig(canvas=(0, 720))
    assert PipelineConfig(rate_kbps=3).modem.samples_per_symbol == ModemConfig.from_preset(3).samples_per_symbol
