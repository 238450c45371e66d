"""Experiment runners and result tables"""
import csv
import json

import pytest

from chirppose.channel import CodecSchedule
from chirppose.corpus import SyntheticCorpusConfig, generate_poses
from chirppose.data import PoseDataset
from chirppose.errors import ConfigError
from chirppose.experiments import (
    default_schedules,
    detector_comparison,
    mean_by,
    noise_robustness,
    predictor_comparison,
    ser_sweep,
    write_rows,
)
from chirppose.renderer import NoiseParams
from chirppose.trainer import TrainConfig

FAST = TrainConfig(learning_rate=0.005, batch_size=50, epochs=2, seed=0)


def _dataset(n=100):
    return PoseDataset(generate_poses(SyntheticCorpusConfig(n_frames=n, seed=5)))


def test_default_schedules():
    schedules = default_schedules()
    assert schedules[0] is None
    assert len(schedules) == 6


def test_ser_sweep_identity_is_clean():
    rows = ser_sweep(rates=(6.0,), schedules=[None], seeds=(0, 1), schemes=("css",), n_symbols=64)
    assert len(rows) == 1
    assert rows[0]["schedule"] == "identity"
    assert rows[0]["mean_ser"] == 0.0
    assert rows[0]["seeds"] == 2


def test_ser_sweep_workers_match_serial():
    """A process pool produces the same table as a serial run"""
    kwargs = dict(rates=(3.0,), schedules=[None, CodecSchedule.constant(20.0, 32.0)],
                  seeds=(0,), schemes=("css", "fsk"), n_symbols=48)
    assert ser_sweep(workers=2, **kwargs) == ser_sweep(**kwargs)


def _cell(rows, scheme, frame_ms, bitrate):
    (row,) = [r for r in rows if r["scheme"] == scheme and r["frame_ms"] == frame_ms
              and r["bitrate_kbps"] == bitrate]
    return row["mean_ser"]


def test_codec_separates_css_from_fsk():
    """
    Over 20 seeds at 6 kbps, FSK loses at least 5 points more than CSS at
    20 ms / 64 kbps, and SER never improves as bitrate or frame size drops
    """
    cells = ((20, 128), (20, 64), (20, 32), (60, 64), (10, 64))
    schedules = [CodecSchedule.constant(f, b) for f, b in cells]
    rows = ser_sweep(rates=(6.0,), schedules=schedules, seeds=range(20), n_symbols=1000)
    css, fsk = _cell(rows, "css", 20.0, 64.0), _cell(rows, "fsk", 20.0, 64.0)
    assert css < 0.05
    assert fsk - css >= 0.05
    tol = 0.005
    for scheme in ("css", "fsk"):
        by_rate = [_cell(rows, scheme, 20.0, b) for b in (128.0, 64.0, 32.0)]
        by_frame = [_cell(rows, scheme, f, 64.0) for f in (60.0, 20.0, 10.0)]
        for trend in (by_rate, by_frame):
            assert all(b >= a - tol for a, b in zip(trend, trend[1:])), (scheme, trend)


def test_ser_sweep_rejects_unknown_scheme():
    with pytest.raises(ConfigError):
        ser_sweep(schemes=("ofdm",), schedules=[None], n_symbols=8)


def test_predictor_comparison_methods():
    rows = predictor_comparison(_dataset(), FAST, noise=NoiseParams(4.0, 1.0))
    assert [r["method"] for r in rows] == ["interpolation", "regression", "mlp", "mlp_noise"]
    assert all(r["mse"] >= 0 for r in rows)


def test_noise_robustness_rows():
    rows = noise_robustness(_dataset(60), NoiseParams(4.0, 1.0), FAST, displacements_px=(0.0, 8.0))
    assert len(rows) == 4
    assert {r["model"] for r in rows} == {"clean", "noise"}


def test_noise_robustness_scores_excluded_keypoints():
    rows = noise_robustness(_dataset(60), NoiseParams(4.0, 1.0), FAST, displacements_px=(0.0,),
                            keypoints="all")
    assert {r["keypoints"] for r in rows} == {"all"}
    with pytest.raises(ConfigError):
        noise_robustness(_dataset(60), NoiseParams(4.0, 1.0), FAST, keypoints="body")


def _large_dataset(n=3000):
    corpus = SyntheticCorpusConfig(n_frames=n, seed=5, hand_missing_prob=0.0)
    return PoseDataset(generate_poses(corpus))


def test_noise_trained_predictor_is_robust():
    """
    With 1-2 joints moved 10 px the noise-trained model beats the clean one
    and stays within 1.5x of its own clean-input error on excluded keypoints
    """
    rows = noise_robustness(_large_dataset(), NoiseParams(10.0, 2.0), TrainConfig(seed=0),
                            displacements_px=(0.0, 10.0), seeds=(0, 1))
    mse = {(r["model"], r["displacement_px"]): r["mse"]
           for r in mean_by(rows, ["model", "displacement_px"], ["mse"])}
    assert mse[("noise", 10.0)] <= mse[("clean", 10.0)]
    assert mse[("noise", 10.0)] <= 1.5 * mse[("noise", 0.0)]


def test_mlp_halves_interpolation_error():
    rows = predictor_comparison(_large_dataset(2000), TrainConfig(seed=0))
    mse = {r["method"]: r["mse"] for r in rows}
    assert mse["mlp"] <= 0.5 * mse["interpolation"]


def test_autoencoder_detects_displaced_joints():
    """Accuracy and F1 of at least 0.8 on a 50/50 labeled set"""
    rows = detector_comparison(_large_dataset(2000), cfg=TrainConfig(seed=0))
    (auto,) = [r for r in rows if r["detector"] == "autoencoder"]
    assert auto["accuracy"] >= 0.80
    assert auto["f1"] >= 0.80


def test_detector_comparison_rows():
    rows = detector_comparison(_dataset(), dims=(32, 8), n_components=8, cfg=FAST)
    assert [r["detector"] for r in rows] == ["autoencoder", "pca"]
    assert all(0.0 <= r["accuracy"] <= 1.0 for r in rows)


def test_mean_by():
    rows = [
        {"method": "a", "seed": 0, "mse": 1.0},
        {"method": "a", "seed": 1, "mse": 3.0},
        {"method": "b", "seed": 0, "mse": None},
    ]
    assert mean_by(rows, ["method"], ["mse"]) == [
        {"method": "a", "mse": 2.0, "n": 2},
        {"method": "b", "mse": None, "n": 1},
    ]


def test_write_rows(tmp_path):
    rows = [{"a": 1, "b": None}, {"a": 2, "c": "x"}]
    write_rows(rows, tmp_path / "out" / "rows.csv")
    with (tmp_path / "out" / "rows.csv").open(newline="") as fh:
        read = list(csv.DictReader(fh))
    assert read == [{"a": "1", "b": "", "c": ""}, {"a": "2", "b": "", "c": "x"}]

    write_rows(rows, tmp_path / "rows.json")
    assert json.loads((tmp_path / "rows.json").read_text()) == rows
