"""
Evaluation metrics and the pipeline report
"""
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union
import json
import logging
import math

import numpy as np

from .errors import ShapeError, UndefinedMetricError
from .pose_core import (
    BODY_NAMES,
    HAND_NAMES,
    HAND_SOURCE,
    MIN_VISIBLE_HAND,
    NUM_BODY,
    NUM_HAND_FULL,
    FullPose,
    select_keypoints,
)
from .renderer import DEFAULT_CANVAS, ReconstructedPose

logger = logging.getLogger(__name__)

JOINT_NAMES: Tuple[str, ...] = (
    BODY_NAMES
    + tuple(f"left_{n}" for n in HAND_NAMES)
    + tuple(f"right_{n}" for n in HAND_NAMES)
)
NUM_JOINTS = len(JOINT_NAMES)
BODY_JOINTS = np.arange(NUM_JOINTS) < NUM_BODY
TRANSMITTED_JOINTS = np.zeros(NUM_JOINTS, dtype=bool)
TRANSMITTED_JOINTS[:NUM_BODY] = True
TRANSMITTED_JOINTS[NUM_BODY + np.array(HAND_SOURCE)] = True
TRANSMITTED_JOINTS[NUM_BODY + NUM_HAND_FULL + np.array(HAND_SOURCE)] = True

PoseLike = Union[ReconstructedPose, np.ndarray]


def reference_pose(pose: FullPose) -> ReconstructedPose:
    """
    Ground truth in renderer layout: the 8 transmitted body keypoints and the
    full 21-keypoint hands (None when the hand is not detected)
    """
    tp = select_keypoints(pose)
    hands = []
    for hand, present in ((pose.left_hand, tp.left_present), (pose.right_hand, tp.right_present)):
        if present and int((hand[:, 2] > 0.5).sum()) >= MIN_VISIBLE_HAND:
            hands.append(np.clip(hand[:, :2], 0.0, 1.0))
        else:
            hands.append(None)
    return ReconstructedPose(tp.body.copy(), hands[0], hands[1], pose.t_ms)


def pose_points(pose: PoseLike) -> np.ndarray:
    """(50, 2) array: body, left hand, right hand; absent hands are NaN"""
    if isinstance(pose, ReconstructedPose):
        out = np.full((NUM_JOINTS, 2), np.nan)
        out[:NUM_BODY] = pose.body
        for offset, hand in ((NUM_BODY, pose.left_hand), (NUM_BODY + NUM_HAND_FULL, pose.right_hand)):
            if hand is not None:
                out[offset:offset + NUM_HAND_FULL] = np.asarray(hand).reshape(NUM_HAND_FULL, 2)
        return out
    arr = np.asarray(pose, dtype=np.float64)
    if arr.size != 2 * NUM_JOINTS:
        raise ShapeError(f"expected {NUM_JOINTS} keypoints, got shape {arr.shape}")
    return arr.reshape(NUM_JOINTS, 2)


@dataclass
class JointErrorStats:
    """
    Per-joint Euclidean pixel error averaged over aligned frames

    Joints never compared (hand absent on either side) hold NaN.
    """
    per_joint_px: np.ndarray
    counts: np.ndarray
    body_mean_px: float
    hand_mean_px: float
    mean_px: float
    transmitted_mean_px: float
    max_joint: str
    max_joint_px: float
    frames: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            "frames": self.frames,
            "mean_px": _finite_or_none(self.mean_px),
            "body_mean_px": _finite_or_none(self.body_mean_px),
            "hand_mean_px": _finite_or_none(self.hand_mean_px),
            "transmitted_mean_px": _finite_or_none(self.transmitted_mean_px),
            "max_joint": self.max_joint,
            "max_joint_px": _finite_or_none(self.max_joint_px),
            "per_joint_px": {
                name: _finite_or_none(v) for name, v in zip(JOINT_NAMES, self.per_joint_px)
            },
        }


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


def _masked_mean(dist: np.ndarray, mask: np.ndarray) -> float:
    sel = dist[:, mask]
    sel = sel[np.isfinite(sel)]
    return float(sel.mean()) if sel.size else float("nan")


def joint_distances(gt: Sequence[PoseLike], rx: Sequence[PoseLike],
                    canvas: Tuple[int, int] = DEFAULT_CANVAS) -> np.ndarray:
    """(frames, 50) pixel distances; NaN where a hand is missing on either side"""
    if len(gt) != len(rx):
        raise ShapeError(f"sequences are not aligned: {len(gt)} vs {len(rx)} frames")
    scale = np.asarray(canvas, dtype=np.float64)
    rows = []
    for a, b in zip(gt, rx):
        diff = (pose_points(a) - pose_points(b)) * scale
        rows.append(np.hypot(diff[:, 0], diff[:, 1]))
    return np.asarray(rows).reshape(len(rows), NUM_JOINTS)


def joint_error(
    gt: Sequence[PoseLike],
    rx: Sequence[PoseLike],
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
) -> JointErrorStats:
    """
    Joint error statistics for aligned sequences

    Args:
        gt, rx: ground truth and received poses (ReconstructedPose or
            (50, 2) arrays), aligned frame by frame
        canvas: (width, height) for the pixel scale

    Raises:
        UndefinedMetricError: no aligned frames
    """
    if len(gt) == 0:
        raise UndefinedMetricError("joint error of an empty sequence")
    dist = joint_distances(gt, rx, canvas)
    counts = np.isfinite(dist).sum(axis=0)
    sums = np.where(np.isfinite(dist), dist, 0.0).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_joint = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    if np.all(np.isnan(per_joint)):
        max_joint, max_px = "", float("nan")
    else:
        idx = int(np.nanargmax(per_joint))
        max_joint, max_px = JOINT_NAMES[idx], float(per_joint[idx])
    return JointErrorStats(
        per_joint_px=per_joint,
        counts=counts,
        body_mean_px=_masked_mean(dist, BODY_JOINTS),
        hand_mean_px=_masked_mean(dist, ~BODY_JOINTS),
        mean_px=_masked_mean(dist, np.ones(NUM_JOINTS, dtype=bool)),
        transmitted_mean_px=_masked_mean(dist, TRANSMITTED_JOINTS),
        max_joint=max_joint,
        max_joint_px=max_px,
        frames=len(gt),
    )


def regression_metrics(
    pred: np.ndarray,
    target: np.ndarray,
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
) -> Dict[str, float]:
    """
    MAE, MSE (pixel units) and R^2 for (n, 2k) normalized x, y arrays

    R^2 uses the per-column mean of the target as the baseline.
    """
    p = np.atleast_2d(np.asarray(pred, dtype=np.float64))
    t = np.atleast_2d(np.asarray(target, dtype=np.float64))
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise UndefinedMetricError("regression metrics of an empty set")
    scale = np.tile(np.asarray(canvas, dtype=np.float64), p.shape[1] // 2)
    diff = (p - t) * scale
    ss_res = float(np.sum(diff ** 2))
    ss_tot = float(np.sum(((t - t.mean(axis=0)) * scale) ** 2))
    return {
        "mae": float(np.mean(np.abs(diff))),
        "mse": float(np.mean(diff ** 2)),
        "r2": 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan"),
    }


@dataclass
class ClassificationMetrics:
    """Binary classification scores; None marks a metric undefined for the set"""
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def undefined(self) -> List[str]:
        return [name for name in ("precision", "recall", "f1") if getattr(self, name) is None]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
        }


def classification_metrics(predicted: Sequence[bool], labels: Sequence[bool]) -> ClassificationMetrics:
    """
    Accuracy, precision, recall and F1 (positive = erroneous)

    Raises:
        UndefinedMetricError: empty input
    """
    p = np.asarray(predicted, dtype=bool).reshape(-1)
    y = np.asarray(labels, dtype=bool).reshape(-1)
    if p.shape != y.shape:
        raise ShapeError(f"{p.size} predictions for {y.size} labels")
    if p.size == 0:
        raise UndefinedMetricError("classification metrics of an empty set")
    tp = int(np.sum(p & y))
    fp = int(np.sum(p & ~y))
    tn = int(np.sum(~p & ~y))
    fn = int(np.sum(~p & y))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    if precision is None or recall is None:
        f1 = None
    elif precision + recall == 0:
        f1 = 0.0
    else:
        f1 = 2 * precision * recall / (precision + recall)
    if y.all() or not y.any():
        logger.warning("single-class evaluation set; undefined metrics are reported as null")
    return ClassificationMetrics((tp + tn) / p.size, precision, recall, f1, tp, fp, tn, fn)


def evaluate_detector(model, poses: np.ndarray, labels: Sequence[bool]) -> ClassificationMetrics:
    """Score a DetectorModel or PcaDetector on a labeled set of 64-vectors"""
    flags, _ = model.detect(poses)
    return classification_metrics(flags, labels)


def frame_symbol_errors(
    sent_type: int,
    sent_symbols: Sequence[int],
    received_type: Optional[int],
    received_symbols: Sequence[int],
) -> Tuple[int, int]:
    """
    (errors, compared) for one aligned frame, header included

    A length mismatch counts the unmatched tail as errors, like `modem.ser`.
    """
    a = np.asarray(sent_symbols, dtype=np.int64).reshape(-1)
    b = np.asarray(received_symbols, dtype=np.int64).reshape(-1)
    total = max(a.size, b.size)
    common = min(a.size, b.size)
    errors = int(np.count_nonzero(a[:common] != b[:common])) + (total - common)
    return errors + int(sent_type != received_type), total + 1


@dataclass
class MetricsReport:
    """
    End-to-end pipeline report

    `runtime` (seconds per stage) is excluded from comparisons and, by
    default, from the JSON so reruns produce identical files.
    """
    frames_sent: int
    frames_received: int
    frames_dropped: int
    ser: Optional[float] = None
    symbols_compared: int = 0
    frames_flagged: int = 0
    joint_error: Optional[Dict[str, Any]] = None
    detector: Optional[Dict[str, Any]] = None
    predictor: Optional[Dict[str, Any]] = None
    decoder: Dict[str, int] = field(default_factory=dict)
    settings: Dict[str, Any] = field(default_factory=dict)
    runtime: Dict[str, float] = field(default_factory=dict, compare=False)

    def to_dict(self, include_runtime: bool = False) -> Dict[str, Any]:
        doc: Dict[str, Any] = {
            "settings": self.settings,
            "frames_sent": self.frames_sent,
            "frames_received": self.frames_received,
            "frames_dropped": self.frames_dropped,
            "frames_flagged": self.frames_flagged,
            "ser": self.ser,
            "symbols_compared": self.symbols_compared,
            "decoder": self.decoder,
            "joint_error": self.joint_error,
            "detector": self.detector,
            "predictor": self.predictor,
        }
        if include_runtime:
            doc["runtime"] = self.runtime
        return doc

    def to_json(self, include_runtime: bool = False) -> str:
        return json.dumps(self.to_dict(include_runtime), indent=2)

    def summary(self, include_runtime: bool = True) -> str:
        lines = [
            f"frames: sent {self.frames_sent}, received {self.frames_received}, "
            f"dropped {self.frames_dropped}, flagged {self.frames_flagged}",
        ]
        if self.ser is not None:
            lines.append(f"SER: {100 * self.ser:.2f}% over {self.symbols_compared} symbols")
        if self.joint_error:
            je = self.joint_error
            lines.append(
                f"joint error: body {_px(je['body_mean_px'])}, hand {_px(je['hand_mean_px'])}, "
                f"transmitted {_px(je['transmitted_mean_px'])} "
                f"(worst: {je['max_joint'] or '-'} {_px(je['max_joint_px'])})"
            )
        if self.detector:
            d = self.detector
            lines.append(f"detector: accuracy {d['accuracy']:.4f}, F1 {d['f1']}")
        if self.predictor:
            p = self.predictor
            lines.append(f"predictor: MAE {p['mae']:.3f} px, MSE {p['mse']:.3f} px^2, R2 {p['r2']:.4f}")
        if include_runtime and self.runtime:
            lines.append("runtime: " + ", ".join(f"{k} {v:.2f}s" for k, v in self.runtime.items()))
        return "\n".join(lines)


def _px(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.2f} px"
