"""Renderer models: error detectors, hand completion and baselines"""
import numpy as np
import pytest

from chirppose.corpus import SyntheticCorpusConfig, generate_poses, static_pose
from chirppose.data import PoseDataset
from chirppose.errors import (
    ConfigError,
    DegenerateDataError,
    ModelFormatError,
    ShapeError,
    UndefinedMetricError,
)
from chirppose.pose_core import HAND_SOURCE, Side, select_keypoints
from chirppose.renderer import (
    DetectorModel,
    LinearModel,
    NoiseParams,
    PcaDetector,
    PredictorModel,
    detect_error,
    estimate_noise_params,
    fit_detector,
    fit_linear_regression,
    fit_pca_detector,
    fit_predictor,
    interpolate_hand,
    interpolate_hands,
    load_detector,
    make_labeled_set,
    perturb_joints,
    predict_hand,
    reconstruct,
)
from chirppose.trainer import TrainConfig

FAST = TrainConfig(learning_rate=0.005, batch_size=50, epochs=3, seed=0)


def _dataset(n=120, seed=0, **kwargs):
    return PoseDataset(generate_poses(SyntheticCorpusConfig(n_frames=n, seed=seed, **kwargs)))


def _pairs(dataset):
    return {side: dataset.hand_pairs(side) for side in Side}


def test_detector_threshold_rule():
    """The stored threshold is 1.2 x the largest training loss"""
    x = _dataset().transmit_matrix()
    det = fit_detector(x, (32, 8), FAST)
    assert det.loss_threshold == pytest.approx(1.2 * det.losses(x).max())
    flags, _ = det.detect(x)
    assert not flags.any()


def test_detect_error_single_pose(tmp_path):
    x = _dataset(60).transmit_matrix()
    det = fit_detector(x, (32, 8), FAST)
    flagged, loss = detect_error(x[0], det)
    assert flagged is False
    assert loss >= 0
    with pytest.raises(ShapeError):
        detect_error(x[0, :10], det)

    path = tmp_path / "detector.json"
    det.save(path)
    loaded = load_detector(path)
    assert isinstance(loaded, DetectorModel)
    assert loaded.loss_threshold == det.loss_threshold
    assert np.array_equal(loaded.losses(x), det.losses(x))


def test_pca_detector_flags_large_errors(tmp_path):
    x = _dataset(200).transmit_matrix()
    det = fit_pca_detector(x, 16)
    assert det.n_components == 16
    assert det.loss_threshold == pytest.approx(1.2 * det.losses(x).max())
    poses, labels = make_labeled_set(x, np.random.default_rng(0), error_fraction=0.3)
    flags, _ = det.detect(poses)
    # displaced joints of 0.3 or more normalized units are far outside the subspace
    assert flags[labels].mean() > 0.5

    path = tmp_path / "pca.json"
    det.save(path)
    loaded = load_detector(path)
    assert isinstance(loaded, PcaDetector)
    assert np.allclose(loaded.components, det.components)


def test_pca_component_range():
    x = _dataset(30).transmit_matrix()
    with pytest.raises(ConfigError):
        fit_pca_detector(x, 0)
    with pytest.raises(ConfigError):
        fit_pca_detector(x, 65)


def test_load_detector_rejects_other_documents(tmp_path):
    path = tmp_path / "model.json"
    path.write_text('{"kind": "predictor", "format_version": 1}')
    with pytest.raises(ModelFormatError):
        load_detector(path)


def test_predictor_shapes_and_range(tmp_path):
    """(n, 24) in, (n, 42) out, clamped to [0, 1]"""
    dataset = _dataset()
    pairs = _pairs(dataset)
    model = fit_predictor(pairs, FAST, hidden=(32,))
    x, _ = pairs[Side.LEFT]
    out = model.predict(x, Side.LEFT)
    assert out.shape == (len(x), 42)
    assert np.all((out >= 0) & (out <= 1))
    assert predict_hand(x[0], model, Side.RIGHT).shape == (21, 2)
    edge = np.zeros((1, 24))
    assert np.all(model.predict(edge, Side.LEFT) >= 0)

    path = tmp_path / "predictor.json"
    model.save(path)
    loaded = PredictorModel.load(path)
    assert np.array_equal(loaded.predict(x, Side.LEFT), out)
    assert loaded.trained_with_noise is False


def test_predictor_records_noise():
    noise = NoiseParams(4.0, 1.0)
    model = fit_predictor(_pairs(_dataset(60)), FAST, noise=noise, hidden=(16,))
    assert model.trained_with_noise
    assert model.noise == noise
    assert PredictorModel.from_dict(model.to_dict()).noise == noise


def test_predictor_needs_both_hands():
    pairs = _pairs(_dataset(20))
    pairs[Side.RIGHT] = (np.zeros((0, 24)), np.zeros((0, 42)))
    with pytest.raises(ShapeError):
        fit_predictor(pairs, FAST)


def test_interpolation_keeps_transmitted_joints():
    """Transmitted keypoints pass through; PIP/DIP lie on the MCP-tip segment"""
    x, y = _dataset(10).hand_pairs(Side.LEFT)
    full = interpolate_hands(x).reshape(-1, 21, 2)
    assert np.allclose(full[:, list(HAND_SOURCE)], x.reshape(-1, 12, 2))
    mcp, tip = full[:, 9], full[:, 12]
    assert np.allclose(full[:, 10], mcp + (tip - mcp) / 3)
    assert np.allclose(full[:, 1], (full[:, 0] + full[:, 2]) / 2)
    assert interpolate_hand(x[0]).shape == (21, 2)


def test_linear_regression_recovers_affine_map():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(100, 24))
    w = rng.normal(size=(24, 42))
    b = rng.normal(size=42)
    model = fit_linear_regression(x, x @ w + b)
    assert np.allclose(model.weights, w, atol=1e-4)
    assert np.allclose(model.predict(x), x @ w + b, atol=1e-4)
    assert isinstance(LinearModel.from_dict(model.to_dict()), LinearModel)


def test_linear_regression_degenerate():
    with pytest.raises(DegenerateDataError):
        fit_linear_regression(np.ones((5, 24)), np.zeros((5, 42)))


def test_estimate_noise_params():
    """Pooled mean and spread of per-joint pixel distances"""
    gt = np.full((32, 2), 0.5)
    rx = gt.copy()
    rx[0, 0] += 10 / 1280
    rx[1, 1] += 6 / 720
    rx[2] = np.nan
    params = estimate_noise_params([(gt, rx)])
    distances = np.array([10.0, 6.0] + [0.0] * 29)
    assert params.mean_px == pytest.approx(distances.mean())
    assert params.std_px == pytest.approx(distances.std())
    with pytest.raises(UndefinedMetricError):
        estimate_noise_params([])


def test_perturb_joints_exact_distance():
    poses = np.full((20, 24), 0.5)
    out = perturb_joints(poses, (1, 2), 8.0, rng=np.random.default_rng(0))
    diff = (out - poses).reshape(20, 12, 2) * np.array([1280, 720])
    dist = np.hypot(diff[..., 0], diff[..., 1])
    moved = dist > 1e-9
    assert np.all((moved.sum(axis=1) >= 1) & (moved.sum(axis=1) <= 2))
    assert np.allclose(dist[moved], 8.0)


def test_make_labeled_set():
    x = _dataset(40).transmit_matrix()
    poses, labels = make_labeled_set(x, np.random.default_rng(3), error_fraction=0.2)
    assert poses.shape == x.shape
    assert labels.sum() == round(0.5 * len(x))
    assert np.array_equal(poses[~labels], x[~labels])
    moved = np.any(poses[labels] != x[labels], axis=1)
    assert moved.all()


def test_reconstruct_without_models():
    """Body passes through; present hands are interpolated to 21 keypoints"""
    tp = select_keypoints(static_pose())
    out = reconstruct(tp)
    assert np.array_equal(out.body, tp.body)
    assert out.left_hand.shape == (21, 2)
    assert not out.erroneous


def test_reconstruct_flags_corrupted_pose():
    dataset = _dataset(200)
    x = dataset.transmit_matrix()
    det = fit_pca_detector(x, 16)
    tp = dataset.transmit_poses()[0]
    tp.keypoints[3] = [0.0, 0.0]
    tp.keypoints[20] = [1.0, 1.0]
    out = reconstruct(tp, detector=det)
    assert out.erroneous
    assert out.loss > det.loss_threshold


def test_reconstruct_missing_hand_skips_detector():
    dataset = _dataset(60, hand_missing_prob=1.0)
    tp = dataset.transmit_poses()[0]
    det = fit_pca_detector(_dataset(60).transmit_matrix(), 8)
    out = reconstruct(tp, detector=det)
    assert out.left_hand is None and out.right_hand is None
    assert not out.erroneous
    assert np.isnan(out.loss)
