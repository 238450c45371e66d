"""Synthetic pose corpus"""
import numpy as np
import pytest

from chirppose.corpus import (
    SyntheticCorpusConfig,
    bone_lengths_px,
    create_corpus_config,
    generate_corpus,
    generate_poses,
    static_pose,
)
from chirppose.errors import ConfigError


def test_generation_is_deterministic():
    cfg = SyntheticCorpusConfig(n_frames=40, seed=9)
    a = generate_poses(cfg)
    b = generate_poses(cfg)
    assert len(a) == 40
    for p, q in zip(a, b):
        assert np.array_equal(p.body, q.body)
        assert np.array_equal(p.left_hand, q.left_hand)


def test_seeds_differ():
    a = generate_poses(SyntheticCorpusConfig(n_frames=5, seed=0))
    b = generate_poses(SyntheticCorpusConfig(n_frames=5, seed=1))
    assert not np.array_equal(a[0].body, b[0].body)


def test_corpus_file_is_byte_identical(tmp_path):
    cfg = SyntheticCorpusConfig(n_frames=25, seed=2)
    assert generate_corpus(cfg, tmp_path / "a.jsonl") == 25
    generate_corpus(cfg, tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_timestamps():
    poses = generate_poses(SyntheticCorpusConfig(n_frames=4, frame_interval_ms=40))
    assert [p.t_ms for p in poses] == [0, 40, 80, 120]


def test_visible_keypoints_in_range():
    for pose in generate_poses(SyntheticCorpusConfig(n_frames=100, seed=4)):
        for part in (pose.body, pose.left_hand, pose.right_hand):
            xy = part[part[:, 2] > 0.5, :2]
            assert np.all((xy >= 0) & (xy <= 1))


def test_bone_lengths_constant_within_sequence():
    """Rigid per-sequence placement keeps every finger bone length fixed"""
    cfg = SyntheticCorpusConfig(n_frames=20, sequence_length=10, seed=1)
    poses = generate_poses(cfg)
    first = np.array([bone_lengths_px(p, cfg.canvas) for p in poses[:10]])
    second = np.array([bone_lengths_px(p, cfg.canvas) for p in poses[10:]])
    assert first.shape == (10, 40)
    assert np.allclose(first, first[0])
    assert np.allclose(second, second[0])
    assert not np.allclose(first[0], second[0])


def test_hand_missing_probability():
    none_missing = generate_poses(SyntheticCorpusConfig(n_frames=30))
    assert all(p.left_hand[:, 2].all() and p.right_hand[:, 2].all() for p in none_missing)
    all_missing = generate_poses(SyntheticCorpusConfig(n_frames=30, hand_missing_prob=1.0))
    assert not any(p.left_hand[:, 2].any() or p.right_hand[:, 2].any() for p in all_missing)


def test_static_pose_raised_arms():
    """Wrists sit above the elbows (smaller y) when the arms are raised"""
    pose = static_pose()
    assert pose.body[15, 1] < pose.body[13, 1]
    assert pose.body[16, 1] < pose.body[14, 1]


def test_config_validation():
    with pytest.raises(ConfigError):
        SyntheticCorpusConfig(n_frames=-1)
    with pytest.raises(ConfigError):
        SyntheticCorpusConfig(hand_missing_prob=2.0)
    with pytest.raises(ConfigError):
        SyntheticCorpusConfig(angles={"elbow": (0.0, 90.0)})
    cfg = create_corpus_config(n_frames=7, canvas=[640, 480], unknown_key=True)
    assert cfg.n_frames == 7
    assert cfg.canvas == (640, 480)
