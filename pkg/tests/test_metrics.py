"""Joint error, regression/classification scores and the pipeline report"""
import json

import numpy as np
import pytest

from chirppose.errors import ShapeError, UndefinedMetricError
from chirppose.metrics import (
    JOINT_NAMES,
    NUM_JOINTS,
    MetricsReport,
    classification_metrics,
    frame_symbol_errors,
    joint_distances,
    joint_error,
    regression_metrics,
)
from chirppose.renderer import ReconstructedPose


def _pose(offset=0.0, hands=True):
    body = np.full((8, 2), 0.5)
    body[:, 0] += offset
    hand = np.full((21, 2), 0.4) if hands else None
    return ReconstructedPose(body, hand, hand)


def test_joint_error_zero_for_identical():
    poses = [_pose(), _pose()]
    stats = joint_error(poses, poses)
    assert stats.frames == 2
    assert stats.mean_px == 0.0
    assert stats.per_joint_px.shape == (NUM_JOINTS,)


def test_joint_error_pixel_scale():
    """A shift of 10 / 1280 in x is 10 px on every body joint"""
    stats = joint_error([_pose()], [_pose(10 / 1280)])
    assert stats.body_mean_px == pytest.approx(10.0)
    assert stats.hand_mean_px == 0.0
    assert stats.max_joint in JOINT_NAMES[:8]
    assert stats.max_joint_px == pytest.approx(10.0)


def test_joint_error_missing_hands_are_skipped():
    stats = joint_error([_pose()], [_pose(hands=False)])
    assert np.isnan(stats.hand_mean_px)
    assert stats.counts[:8].tolist() == [1] * 8
    assert stats.counts[8:].sum() == 0
    doc = stats.to_dict()
    assert doc["hand_mean_px"] is None
    json.dumps(doc)


def test_joint_error_edge_cases():
    with pytest.raises(UndefinedMetricError):
        joint_error([], [])
    with pytest.raises(ShapeError):
        joint_distances([_pose()], [])
    with pytest.raises(ShapeError):
        joint_distances([np.zeros((10, 2))], [np.zeros((10, 2))])


def test_regression_metrics():
    target = np.array([[0.0, 0.0], [1.0, 1.0]])
    pred = target + np.array([1 / 1280, 0.0])
    m = regression_metrics(pred, target)
    assert m["mae"] == pytest.approx(0.5)
    assert m["mse"] == pytest.approx(0.5)
    assert m["r2"] < 1.0
    assert regression_metrics(target, target)["r2"] == 1.0
    assert np.isnan(regression_metrics(np.zeros((3, 2)), np.zeros((3, 2)))["r2"])
    with pytest.raises(ShapeError):
        regression_metrics(np.zeros((2, 2)), np.zeros((2, 4)))


def test_classification_metrics():
    m = classification_metrics([True, True, False, False], [True, False, False, True])
    assert (m.tp, m.fp, m.tn, m.fn) == (1, 1, 1, 1)
    assert m.accuracy == 0.5
    assert m.precision == 0.5 and m.recall == 0.5 and m.f1 == 0.5


def test_classification_single_class():
    """No positives leaves precision, recall and F1 undefined"""
    m = classification_metrics([False, False], [False, False])
    assert m.accuracy == 1.0
    assert m.undefined == ["precision", "recall", "f1"]
    assert m.to_dict()["f1"] is None
    with pytest.raises(UndefinedMetricError):
        classification_metrics([], [])


def test_frame_symbol_errors():
    assert frame_symbol_errors(0, [1, 2, 3], 0, [1, 2, 3]) == (0, 4)
    assert frame_symbol_errors(0, [1, 2, 3], 1, [1, 5, 3]) == (2, 4)
    assert frame_symbol_errors(0, [1, 2, 3], 0, [1]) == (2, 4)


def test_report_json_excludes_runtime():
    a = MetricsReport(10, 9, 1, ser=0.01, runtime={"decode": 1.5})
    b = MetricsReport(10, 9, 1, ser=0.01, runtime={"decode": 3.0})
    assert a == b
    assert a.to_json() == b.to_json()
    assert "runtime" not in json.loads(a.to_json())
    assert json.loads(a.to_json(include_runtime=True))["runtime"] == {"decode": 1.5}
    assert "SER: 1.00%" in a.summary()
