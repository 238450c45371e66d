"""Command-line entry point"""
from dataclasses import fields
import json

import pytest

from chirppose.cli import build_parser, main
from chirppose.data import load_pose_file, load_transmit_poses
from chirppose.modem import ModemConfig


def test_version(capsys):
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["--version"])
    assert info.value.code == 0
    assert capsys.readouterr().out.startswith("chirppose ")


def test_gen_corpus(tmp_path):
    out = tmp_path / "corpus.jsonl"
    assert main(["-q", "gen-corpus", "--out", str(out), "--frames", "12", "--seed", "1"]) == 0
    assert len(load_pose_file(out)) == 12


def test_encode_decode_round_trip(tmp_path):
    """encode then decode recovers one received pose per input pose"""
    corpus = tmp_path / "corpus.jsonl"
    wav = tmp_path / "poses.wav"
    received = tmp_path / "received.jsonl"
    main(["-q", "gen-corpus", "--out", str(corpus), "--frames", "6"])
    assert main(["-q", "encode", "--input", str(corpus), "--out", str(wav), "--rate", "6"]) == 0
    assert wav.exists()
    assert main(["-q", "decode", "--input", str(wav), "--out", str(received), "--rate", "6"]) == 0
    poses = load_transmit_poses(received)
    assert len(poses) == 6
    assert all(p.left_present and p.right_present for p in poses)


def test_ser_test_prints_json(capsys):
    assert main(["-q", "ser-test", "--n-symbols", "200", "--seed", "0", "--rate", "3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["channel"] == "identity"
    assert doc["samples_per_symbol"] == 64
    assert doc["ser"] == 0.0


def test_symbol_rate_flag(capsys):
    """--symbol-rate replaces the preset"""
    argv = ["-q", "ser-test", "--n-symbols", "64", "--seed", "0", "--symbol-rate", "3000"]
    assert main(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["samples_per_symbol"] == 16
    assert doc["bit_rate"] == 12000
    assert doc["ser"] == 0.0


def test_rate_and_symbol_rate_conflict():
    with pytest.raises(SystemExit) as info:
        build_parser().parse_args(["ser-test", "--rate", "6", "--symbol-rate", "3000"])
    assert info.value.code == 2


def test_every_modem_field_has_a_flag():
    args = build_parser().parse_args(["ser-test"])
    assert {f.name for f in fields(ModemConfig)} <= set(vars(args))


def test_pipeline_command(tmp_path, capsys):
    out = tmp_path / "run"
    code = main(["-q", "pipeline", "--frames", "5", "--no-codec", "--output", str(out), "--seed", "0"])
    assert code == 0
    assert "frames: sent 5, received 5" in capsys.readouterr().out
    assert json.loads((out / "report.json").read_text())["frames_received"] == 5


def test_missing_input_exits_2(tmp_path, capsys):
    code = main(["-q", "encode", "--input", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path / "a.wav")])
    assert code == 2
    assert capsys.readouterr().err.startswith("chirppose: error:")


def test_bad_config_exits_2(tmp_path, capsys):
    conf = tmp_path / "bad.json"
    conf.write_text("{not json")
    code = main(["-q", "gen-corpus", "--out", str(tmp_path / "c.jsonl"), "--config", str(conf)])
    assert code == 2
    assert "cannot read config" in capsys.readouterr().err


def test_config_file_sets_corpus_size(tmp_path):
    conf = tmp_path / "run.json"
    conf.write_text(json.dumps({"corpus": {"n_frames": 4, "seed": 2}}))
    out = tmp_path / "c.jsonl"
    assert main(["-q", "gen-corpus", "--out", str(out), "--config", str(conf)]) == 0
    assert len(load_pose_file(out)) == 4
