"""Skeleton rendering and frame output"""
import json

import numpy as np
import pytest

from chirppose.corpus import static_pose
from chirppose.errors import ConfigError
from chirppose.pose_core import select_keypoints
from chirppose.render import (
    BACKGROUND,
    read_ppm,
    render_frames,
    render_skeleton,
    save_image,
    to_pixels,
    write_ppm,
)
from chirppose.renderer import ReconstructedPose, reconstruct


def _pose():
    return reconstruct(select_keypoints(static_pose()))


def test_to_pixels_rounds_half_up():
    pts = np.array([[0.5, 0.5], [0.0, 1.0], [0.25, 0.75]])
    assert to_pixels(pts, (1280, 720)).tolist() == [[640, 360], [0, 720], [320, 540]]
    # 0.5 + 0.5 floors to 1
    assert to_pixels(np.array([[0.5, 0.5]]), (1, 1)).tolist() == [[1, 1]]


def test_render_shape_and_content():
    img = render_skeleton(_pose(), (320, 180))
    assert img.shape == (180, 320, 3)
    assert img.dtype == np.uint8
    assert np.any(img != BACKGROUND)


def test_render_skips_absent_hands():
    pose = _pose()
    no_hands = ReconstructedPose(pose.body, None, None)
    with_hands = render_skeleton(pose, (320, 180))
    body_only = render_skeleton(no_hands, (320, 180))
    assert np.count_nonzero(body_only) < np.count_nonzero(with_hands)


def test_render_rejects_bad_canvas():
    with pytest.raises(ConfigError):
        render_skeleton(_pose(), (0, 100))


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(0).integers(0, 256, size=(12, 20, 3), dtype=np.uint8)
    path = tmp_path / "frame.ppm"
    write_ppm(img, path)
    assert path.read_bytes().startswith(b"P6\n20 12\n255\n")
    assert np.array_equal(read_ppm(path), img)
    assert save_image(img, tmp_path / "other.ppm").suffix == ".ppm"


def test_render_frames_index(tmp_path):
    """Erroneous frames are listed without an image unless render_dropped is set"""
    good = _pose()
    bad = ReconstructedPose(good.body, good.left_hand, good.right_hand, t_ms=33,
                            erroneous=True, loss=0.5)
    index = render_frames([good, bad], tmp_path / "out", (160, 90), image_format="ppm")
    assert [e["file"] for e in index] == ["frame_00000.ppm", None]
    assert index[1]["erroneous"] and index[1]["loss"] == 0.5
    doc = json.loads((tmp_path / "out" / "index.json").read_text())
    assert doc["canvas"] == [160, 90]
    assert len(doc["frames"]) == 2
    assert (tmp_path / "out" / "frame_00000.ppm").exists()

    index = render_frames([good, bad], tmp_path / "all", (160, 90), "ppm", render_dropped=True)
    assert index[1]["file"] == "frame_00001.ppm"


def test_render_frames_png(tmp_path):
    index = render_frames([_pose()], tmp_path, (64, 48))
    assert index[0]["file"] in ("frame_00000.png", "frame_00000.ppm")
    assert (tmp_path / index[0]["file"]).exists()


def test_render_frames_format_check(tmp_path):
    with pytest.raises(ConfigError):
        render_frames([_pose()], tmp_path, image_format="gif")
