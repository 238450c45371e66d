"""
Receive-side pose intelligence

- Error detection: autoencoder reconstruction loss (DetectorModel) with a PCA
  baseline (PcaDetector); a pose is erroneous when its loss exceeds
  1.2 x the largest loss seen in training.
- Hand completion: per-hand MLP predictor (12 transmitted -> 21 keypoints),
  linear-interpolation and linear-regression baselines.
- Noise estimation for noise-aware predictor training.
- Display policy (reconstruct): drop flagged frames, complete hands, pass the
  body through.
"""
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union
import json
import logging

import numpy as np
from scipy import linalg

from .errors import (
    ConfigError,
    DegenerateDataError,
    ModelFormatError,
    ModelVersionError,
    ShapeError,
    UndefinedMetricError,
)
from .network import MlpModel
from .pose_core import HAND_SOURCE, NUM_HAND, NUM_HAND_FULL, Side, TransmitPose
from .trainer import NoiseInjection, TrainConfig, Trainer, batch_losses, displace_joints

logger = logging.getLogger(__name__)

POSE_DIM = 64
HAND_IN = 2 * NUM_HAND
HAND_OUT = 2 * NUM_HAND_FULL
THRESHOLD_MARGIN = 1.2
HAND_SCALE = 0.1
RIDGE = 1e-8
DEFAULT_CANVAS = (1280, 720)
FORMAT_VERSION = 1

# Interpolated joints: full-hand index -> (from, to, fraction) in full-hand indices
INTERPOLATED = {
    1: (0, 2, 0.5),      # thumb CMC between wrist and thumb MCP
    3: (2, 4, 0.5),      # thumb IP
    7: (5, 8, 2 / 3),    # index DIP
    10: (9, 12, 1 / 3),
    11: (9, 12, 2 / 3),
    14: (13, 16, 1 / 3),
    15: (13, 16, 2 / 3),
    18: (17, 20, 1 / 3),
    19: (17, 20, 2 / 3),
}
# output columns (x, y) of the joints that are never transmitted
EXCLUDED_COLUMNS = tuple(c for j in sorted(INTERPOLATED) for c in (2 * j, 2 * j + 1))


def _check_version(doc: Dict[str, Any], kind: str) -> None:
    if not isinstance(doc, dict) or doc.get("kind") != kind:
        raise ModelFormatError(f"not a {kind} document")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelVersionError(
            f"{kind} format version {doc.get('format_version')} is not supported"
        )


def _read_json(filepath: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(filepath, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"{filepath}: {e}") from e


def _write_json(doc: Dict[str, Any], filepath: Union[str, Path]) -> None:
    with open(filepath, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _pose_matrix(poses: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(np.asarray(poses, dtype=np.float64))
    if x.shape[1] != POSE_DIM:
        raise ShapeError(f"poses must be {POSE_DIM}-vectors, got shape {x.shape}")
    return x


# ========== Error detection ==========

@dataclass(eq=False)
class DetectorModel:
    """Autoencoder plus its loss threshold"""
    autoencoder: MlpModel
    loss_threshold: float

    def losses(self, poses: np.ndarray) -> np.ndarray:
        return batch_losses(self.autoencoder, _pose_matrix(poses))

    def detect(self, poses: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorised detect_error: (is_erroneous, loss) per row"""
        loss = self.losses(poses)
        return loss > self.loss_threshold, loss

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "detector",
            "format_version": FORMAT_VERSION,
            "loss_threshold": self.loss_threshold,
            "autoencoder": self.autoencoder.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "DetectorModel":
        _check_version(doc, "detector")
        return cls(MlpModel.from_dict(doc["autoencoder"]), float(doc["loss_threshold"]))

    def save(self, filepath: Union[str, Path]) -> None:
        _write_json(self.to_dict(), filepath)

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "DetectorModel":
        return cls.from_dict(_read_json(filepath))


def fit_detector(
    clean_poses: np.ndarray,
    dims: Tuple[int, int] = (64, 16),
    cfg: Optional[TrainConfig] = None,
    verbose: bool = False,
) -> DetectorModel:
    """
    Train a 64 -> hidden -> latent -> hidden -> 64 autoencoder on clean poses

    The threshold is 1.2 x the maximum reconstruction loss over the training
    set, computed with the same loss used at detection time.
    """
    x = _pose_matrix(clean_poses)
    if x.shape[0] == 0:
        raise ShapeError("empty training set")
    hidden, latent = dims
    cfg = cfg or TrainConfig()
    model = MlpModel.create(
        [POSE_DIM, hidden, latent, hidden, POSE_DIM],
        ["relu", "identity", "relu", "identity"],
        seed=cfg.seed,
    )
    Trainer(model, cfg).train(x, x, verbose=verbose)
    threshold = THRESHOLD_MARGIN * float(batch_losses(model, x).max())
    logger.info("detector threshold %.6g (hidden=%d latent=%d)", threshold, hidden, latent)
    return DetectorModel(model, threshold)


def detect_error(pose: np.ndarray, d: Union[DetectorModel, "PcaDetector"]) -> Tuple[bool, float]:
    """(is_erroneous, loss) for one 64-vector"""
    pose = np.asarray(pose, dtype=np.float64)
    if pose.shape != (POSE_DIM,):
        raise ShapeError(f"pose must be a {POSE_DIM}-vector, got shape {pose.shape}")
    flags, loss = d.detect(pose[None, :])
    return bool(flags[0]), float(loss[0])


@dataclass(eq=False)
class PcaDetector:
    """Linear reconstruction baseline thresholded like the autoencoder"""
    mean: np.ndarray
    components: np.ndarray
    loss_threshold: float = np.inf

    @property
    def n_components(self) -> int:
        return int(self.components.shape[0])

    def losses(self, poses: np.ndarray) -> np.ndarray:
        x = _pose_matrix(poses) - self.mean
        recon = (x @ self.components.T) @ self.components
        return np.mean((x - recon) ** 2, axis=1)

    def detect(self, poses: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        loss = self.losses(poses)
        return loss > self.loss_threshold, loss

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "pca_detector",
            "format_version": FORMAT_VERSION,
            "loss_threshold": self.loss_threshold,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "PcaDetector":
        _check_version(doc, "pca_detector")
        return cls(
            np.asarray(doc["mean"], dtype=np.float64),
            np.asarray(doc["components"], dtype=np.float64).reshape(-1, POSE_DIM),
            float(doc["loss_threshold"]),
        )

    def save(self, filepath: Union[str, Path]) -> None:
        _write_json(self.to_dict(), filepath)

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "PcaDetector":
        return cls.from_dict(_read_json(filepath))


def fit_pca_detector(clean_poses: np.ndarray, n_components: int = 16) -> PcaDetector:
    """
    Principal components from the covariance eigendecomposition

    Raises:
        ConfigError: n_components outside [1, 64]
    """
    if not 1 <= n_components <= POSE_DIM:
        raise ConfigError(f"n_components must lie in [1, {POSE_DIM}], got {n_components}")
    x = _pose_matrix(clean_poses)
    if x.shape[0] == 0:
        raise ShapeError("empty training set")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / max(x.shape[0], 1)
    _, vecs = linalg.eigh(cov)
    components = vecs[:, ::-1][:, :n_components].T.copy()
    det = PcaDetector(mean, components)
    det.loss_threshold = THRESHOLD_MARGIN * float(det.losses(x).max())
    return det


def load_detector(filepath: Union[str, Path]) -> Union[DetectorModel, PcaDetector]:
    """Load either detector kind, dispatching on the stored `kind`"""
    doc = _read_json(filepath)
    if isinstance(doc, dict) and doc.get("kind") == "pca_detector":
        return PcaDetector.from_dict(doc)
    return DetectorModel.from_dict(doc)


def pca_score(pose: np.ndarray, d: PcaDetector) -> float:
    return float(d.losses(np.asarray(pose, dtype=np.float64)[None, :])[0])


# ========== Hand completion ==========

def _hand_input(transmitted: np.ndarray) -> np.ndarray:
    x = np.asarray(transmitted, dtype=np.float64)
    if x.ndim == 3 or (x.ndim == 2 and x.shape[1] == HAND_IN):
        flat = x.reshape(x.shape[0], -1)
    else:
        flat = x.reshape(1, -1)
    if flat.shape[1] != HAND_IN:
        raise ShapeError(f"expected {NUM_HAND} transmitted hand keypoints, got shape {x.shape}")
    return flat


def hand_features(inputs: np.ndarray, targets: Optional[np.ndarray] = None):
    """
    Centroid-relative features

    Coordinates are shifted by the centroid of the 12 transmitted keypoints and
    divided by HAND_SCALE; targets (21 keypoints) use the same centroid.
    """
    x = np.asarray(inputs, dtype=np.float64)
    c = x.reshape(x.shape[0], -1, 2).mean(axis=1)
    feats = (x - np.tile(c, NUM_HAND)) / HAND_SCALE
    if targets is None:
        return feats, c
    t = (np.asarray(targets, dtype=np.float64) - np.tile(c, NUM_HAND_FULL)) / HAND_SCALE
    return feats, t


@dataclass(frozen=True)
class NoiseParams:
    """
    Joint displacement statistics in pixels on `canvas`

    `fraction` and `max_joints` set how training uses them: that share of
    every batch gets 1..max_joints displaced joints.
    """
    mean_px: float
    std_px: float
    canvas: Tuple[int, int] = DEFAULT_CANVAS
    fraction: float = 0.5
    max_joints: int = 2

    def __post_init__(self):
        if self.std_px < 0:
            raise ConfigError("std_px must be >= 0")

    def injection(self) -> NoiseInjection:
        return NoiseInjection(self.mean_px, self.std_px, self.fraction, self.max_joints,
                              tuple(self.canvas))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "mean_px": self.mean_px,
            "std_px": self.std_px,
            "canvas": list(self.canvas),
            "fraction": self.fraction,
            "max_joints": self.max_joints,
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "NoiseParams":
        return cls(
            float(doc["mean_px"]),
            float(doc["std_px"]),
            tuple(doc.get("canvas", DEFAULT_CANVAS)),
            float(doc.get("fraction", 0.5)),
            int(doc.get("max_joints", 2)),
        )


@dataclass(eq=False)
class PredictorModel:
    """Left and right hand MLPs (24 -> 128 -> 128 -> 42)"""
    left: MlpModel
    right: MlpModel
    trained_with_noise: bool = False
    noise: Optional[NoiseParams] = None

    def model_for(self, side: Side) -> MlpModel:
        return self.left if side == Side.LEFT else self.right

    def predict(self, transmitted: np.ndarray, side: Side) -> np.ndarray:
        """Batch prediction: (n, 24) -> (n, 42) normalized coordinates in [0, 1]"""
        x = _hand_input(transmitted)
        feats, c = hand_features(x)
        out = self.model_for(side).forward(feats) * HAND_SCALE + np.tile(c, NUM_HAND_FULL)
        return np.clip(out, 0.0, 1.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "predictor",
            "format_version": FORMAT_VERSION,
            "trained_with_noise": self.trained_with_noise,
            "noise": self.noise.to_dict() if self.noise else None,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "PredictorModel":
        _check_version(doc, "predictor")
        noise = NoiseParams.from_dict(doc["noise"]) if doc.get("noise") else None
        return cls(
            MlpModel.from_dict(doc["left"]),
            MlpModel.from_dict(doc["right"]),
            bool(doc.get("trained_with_noise", False)),
            noise,
        )

    def save(self, filepath: Union[str, Path]) -> None:
        _write_json(self.to_dict(), filepath)

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "PredictorModel":
        return cls.from_dict(_read_json(filepath))


def fit_hand_model(
    inputs: np.ndarray,
    targets: np.ndarray,
    cfg: Optional[TrainConfig] = None,
    hidden: Sequence[int] = (128, 128),
    verbose: bool = False,
    test: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> MlpModel:
    """Train one hand model on raw (n, 24) -> (n, 42) normalized coordinates"""
    cfg = cfg or TrainConfig()
    model = MlpModel.create([HAND_IN, *hidden, HAND_OUT], seed=cfg.seed)
    Trainer(model, cfg, transform=hand_features).train(
        inputs, targets, test=test, verbose=verbose
    )
    return model


def fit_predictor(
    pairs: Dict[Side, Tuple[np.ndarray, np.ndarray]],
    cfg: Optional[TrainConfig] = None,
    noise: Optional[NoiseParams] = None,
    hidden: Sequence[int] = (128, 128),
    verbose: bool = False,
) -> PredictorModel:
    """
    Train left and right hand models

    With `noise`, 1..noise.max_joints joints of a noise.fraction share of each
    batch are displaced by N(mean_px, std_px) pixels during training (inputs
    only).
    """
    cfg = cfg or TrainConfig()
    if noise is not None:
        cfg = replace(cfg, noise=noise.injection())
    models = {}
    for side in (Side.LEFT, Side.RIGHT):
        x, y = pairs[side]
        if len(x) == 0:
            raise ShapeError(f"no training pairs for the {side.name.lower()} hand")
        logger.info("training %s hand predictor on %d samples", side.name.lower(), len(x))
        models[side] = fit_hand_model(x, y, cfg, hidden, verbose)
    return PredictorModel(models[Side.LEFT], models[Side.RIGHT], noise is not None, noise)


def predict_hand(transmitted: np.ndarray, m: PredictorModel, side: Side) -> np.ndarray:
    """12 transmitted keypoints -> 21 keypoints (21, 2), clamped to [0, 1]"""
    return m.predict(transmitted, side)[0].reshape(NUM_HAND_FULL, 2)


def interpolate_hands(transmitted: np.ndarray) -> np.ndarray:
    """Batch linear interpolation: (n, 24) -> (n, 42)"""
    x = _hand_input(transmitted).reshape(-1, NUM_HAND, 2)
    full = np.zeros((x.shape[0], NUM_HAND_FULL, 2))
    full[:, list(HAND_SOURCE)] = x
    for joint, (a, b, frac) in INTERPOLATED.items():
        full[:, joint] = full[:, a] + frac * (full[:, b] - full[:, a])
    return full.reshape(x.shape[0], -1)


def interpolate_hand(transmitted: np.ndarray) -> np.ndarray:
    """
    Place missing joints along MCP -> tip (PIP 1/3, DIP 2/3, thumb IP 1/2;
    thumb CMC halfway between wrist and thumb MCP)

    Returns:
        (21, 2) keypoints
    """
    return interpolate_hands(transmitted)[0].reshape(NUM_HAND_FULL, 2)


@dataclass(eq=False)
class LinearModel:
    """Affine least-squares map y = x W + b"""
    weights: np.ndarray
    bias: np.ndarray

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
        if x.shape[1] != self.weights.shape[0]:
            raise ShapeError(f"expected input dim {self.weights.shape[0]}, got {x.shape[1]}")
        return x @ self.weights + self.bias

    def to_dict(self) -> Dict[str, Any]:
        return {
            "kind": "linear",
            "format_version": FORMAT_VERSION,
            "weights": self.weights.tolist(),
            "bias": self.bias.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "LinearModel":
        _check_version(doc, "linear")
        return cls(np.asarray(doc["weights"], dtype=np.float64), np.asarray(doc["bias"], dtype=np.float64))

    def save(self, filepath: Union[str, Path]) -> None:
        _write_json(self.to_dict(), filepath)

    @classmethod
    def load(cls, filepath: Union[str, Path]) -> "LinearModel":
        return cls.from_dict(_read_json(filepath))


def fit_linear_regression(inputs: np.ndarray, targets: np.ndarray, ridge: float = RIDGE) -> LinearModel:
    """
    Normal equations with a ridge term (bias unpenalized)

    Raises:
        DegenerateDataError: every input row is identical
    """
    x = np.atleast_2d(np.asarray(inputs, dtype=np.float64))
    y = np.atleast_2d(np.asarray(targets, dtype=np.float64))
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise ShapeError(f"inputs {x.shape} and targets {y.shape} do not pair up")
    if x.shape[0] == 1 or np.all(x == x[0]):
        raise DegenerateDataError("all input rows are identical")
    a = np.hstack([x, np.ones((x.shape[0], 1))])
    gram = a.T @ a
    penalty = ridge * np.eye(gram.shape[0])
    penalty[-1, -1] = 0.0
    beta = linalg.solve(gram + penalty, a.T @ y, assume_a="sym")
    return LinearModel(beta[:-1], beta[-1])


# ========== Noise estimation and perturbation ==========

def joint_distances_px(
    reference: np.ndarray,
    other: np.ndarray,
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
) -> np.ndarray:
    """Euclidean pixel distance per joint for (..., k, 2) normalized arrays"""
    scale = np.asarray(canvas, dtype=np.float64)
    diff = (np.asarray(reference, dtype=np.float64) - np.asarray(other, dtype=np.float64)) * scale
    return np.sqrt(np.sum(diff ** 2, axis=-1))


def estimate_noise_params(
    pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
) -> NoiseParams:
    """
    Pool per-joint pixel distances of (ground truth, received) pairs

    Joints missing (NaN) on either side are skipped.

    Raises:
        UndefinedMetricError: no pairs or no comparable joints
    """
    dists = []
    for gt, rx in pairs:
        gt = np.asarray(gt, dtype=np.float64).reshape(-1, 2)
        rx = np.asarray(rx, dtype=np.float64).reshape(-1, 2)
        d = joint_distances_px(gt, rx, canvas)
        dists.append(d[np.isfinite(d)])
    pooled = np.concatenate(dists) if dists else np.zeros(0)
    if pooled.size == 0:
        raise UndefinedMetricError("no joint pairs to estimate noise from")
    return NoiseParams(float(pooled.mean()), float(pooled.std()), tuple(canvas))


def perturb_joints(
    poses: np.ndarray,
    n_joints: Union[int, Tuple[int, int]],
    displacement_px: float,
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
    rng: Optional[np.random.Generator] = None,
) -> np.ndarray:
    """
    Displace joints of every row by exactly `displacement_px` in random
    directions

    Args:
        poses: (n, 2k) normalized coordinates
        n_joints: joints per row, or an inclusive (low, high) range
    """
    rng = rng or np.random.default_rng()
    x = np.atleast_2d(np.asarray(poses, dtype=np.float64))
    n = x.shape[0]
    if isinstance(n_joints, tuple):
        counts = rng.integers(n_joints[0], n_joints[1] + 1, size=n)
    else:
        counts = np.full(n, int(n_joints))
    mags = np.full(int(counts.sum()), float(displacement_px))
    return displace_joints(x, np.arange(n), counts, mags, canvas, rng)


def make_labeled_set(
    clean_poses: np.ndarray,
    rng: np.random.Generator,
    error_fraction: float = 0.20,
    positive_share: float = 0.5,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Labeled detection set from clean poses

    A positive has 1-2 joints displaced by more than `error_fraction` of the
    normalized coordinate range (uniform in [1, 2] x error_fraction, random
    direction); negatives are left clean.

    Returns:
        (poses (n, 64), labels (n,) bool)
    """
    x = _pose_matrix(clean_poses).copy()
    n = x.shape[0]
    labels = np.zeros(n, dtype=bool)
    positives = rng.choice(n, size=int(round(positive_share * n)), replace=False)
    labels[positives] = True
    counts = rng.integers(1, 3, size=positives.size)
    mags = rng.uniform(error_fraction, 2 * error_fraction, size=int(counts.sum()))
    # unit canvas: magnitudes are in normalized units
    x = displace_joints(x, positives, counts, mags, (1, 1), rng)
    return x, labels


# ========== Display policy ==========

@dataclass(eq=False)
class ReconstructedPose:
    """
    Renderer output: 8 body keypoints, 21 per present hand

    Absent hands are None. `erroneous` frames are not displayed.
    """
    body: np.ndarray
    left_hand: Optional[np.ndarray]
    right_hand: Optional[np.ndarray]
    t_ms: int = 0
    erroneous: bool = False
    loss: float = float("nan")

    def hand(self, side: Side) -> Optional[np.ndarray]:
        return self.left_hand if side == Side.LEFT else self.right_hand


def reconstruct(
    pose: TransmitPose,
    detector: Optional[Union[DetectorModel, PcaDetector]] = None,
    predictor: Optional[PredictorModel] = None,
) -> ReconstructedPose:
    """
    Apply the display policy to one received pose

    Complete poses are scored by the detector; hands are re-predicted by the
    predictor (or interpolated without one); the body passes through.
    """
    erroneous, loss = False, float("nan")
    if detector is not None and pose.left_present and pose.right_present:
        erroneous, loss = detect_error(pose.as_vector(), detector)

    hands: Dict[Side, Optional[np.ndarray]] = {}
    for side in (Side.LEFT, Side.RIGHT):
        if not pose.is_present(side):
            hands[side] = None
            continue
        transmitted = pose.hand(side).reshape(-1)
        if predictor is not None:
            hands[side] = predict_hand(transmitted, predictor, side)
        else:
            hands[side] = interpolate_hand(transmitted)

    return ReconstructedPose(
        body=pose.body.copy(),
        left_hand=hands[Side.LEFT],
        right_hand=hands[Side.RIGHT],
        t_ms=pose.t_ms,
        erroneous=erroneous,
        loss=loss,
    )
