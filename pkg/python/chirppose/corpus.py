"""
Synthetic pose corpus: a seeded 2-D kinematic signer

Each sequence draws bone lengths, a global rotation and a placement once,
then random-walks the joint angles frame by frame inside their ranges. Bones
are rigid, so every bone keeps its pixel length for a whole sequence. Each
sequence is scaled to fit the canvas margins, so no coordinate is clamped.
"""
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union
import logging
import math

import numpy as np

from .data import save_pose_file
from .errors import ConfigError
from .pose_core import NUM_BODY_FULL, NUM_HAND_FULL, FullPose

logger = logging.getLogger(__name__)

# Bone lengths in shoulder widths
DEFAULT_BONES: Dict[str, float] = {
    "neck": 0.55,
    "upper_arm": 0.75,
    "forearm": 0.65,
    "torso": 1.3,
    "palm": 0.22,
    "thumb_base": 0.10,
    "thumb_mcp": 0.09,
    "thumb_ip": 0.07,
    "thumb_tip": 0.06,
    "finger_prox": 0.10,
    "finger_mid": 0.065,
    "finger_dist": 0.055,
}

# Joint angle ranges in degrees; "shoulder" is the upper arm direction
# measured from straight down, outward positive; "elbow" and finger joints
# are flexion angles
DEFAULT_ANGLES: Dict[str, Tuple[float, float]] = {
    "shoulder": (5.0, 80.0),
    "elbow": (20.0, 150.0),
    "wrist": (-40.0, 40.0),
    "thumb": (0.0, 50.0),
    "mcp": (0.0, 80.0),
    "pip": (0.0, 100.0),
    "dip": (0.0, 70.0),
}

FINGER_SPLAY = (-12.0, 0.0, 10.0, 20.0)
THUMB_SPLAY = -55.0
FINGER_SCALE = (1.0, 1.1, 1.0, 0.8)
FINGER_BASES = (5, 9, 13, 17)


@dataclass(frozen=True)
class SyntheticCorpusConfig:
    """
    Attributes:
        seed: generator seed
        n_frames: total frames emitted
        canvas: (width, height) the poses are framed for
        sequence_length: frames per sequence (one bone-length draw each)
        frame_interval_ms: timestamp step
        hand_missing_prob: per-frame probability that a hand is undetected
        bones: bone lengths (shoulder widths)
        angles: (low, high) joint angle ranges in degrees
        step_deg: random-walk standard deviation per frame
        bone_jitter: relative per-sequence bone length variation
        rotation_deg: maximum global in-plane rotation
        margin: normalized margin kept free on every side
    """
    seed: int = 0
    n_frames: int = 1000
    canvas: Tuple[int, int] = (1280, 720)
    sequence_length: int = 50
    frame_interval_ms: int = 33
    hand_missing_prob: float = 0.0
    bones: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_BONES))
    angles: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(DEFAULT_ANGLES))
    step_deg: float = 4.0
    bone_jitter: float = 0.1
    rotation_deg: float = 8.0
    margin: float = 0.05

    def __post_init__(self):
        if self.n_frames < 0:
            raise ConfigError("n_frames must be >= 0")
        if self.sequence_length < 1:
            raise ConfigError("sequence_length must be >= 1")
        if min(self.canvas) <= 0:
            raise ConfigError("canvas must be positive")
        if not 0.0 <= self.hand_missing_prob <= 1.0:
            raise ConfigError("hand_missing_prob must lie in [0, 1]")
        if not 0.0 <= self.bone_jitter < 1.0:
            raise ConfigError("bone_jitter must lie in [0, 1)")
        if not 0.0 <= self.margin < 0.5:
            raise ConfigError("margin must lie in [0, 0.5)")
        missing = set(DEFAULT_BONES) - set(self.bones)
        if missing:
            raise ConfigError(f"missing bone lengths: {sorted(missing)}")
        for name, length in self.bones.items():
            if not length > 0:
                raise ConfigError(f"bone length '{name}' must be > 0")
        missing = set(DEFAULT_ANGLES) - set(self.angles)
        if missing:
            raise ConfigError(f"missing angle ranges: {sorted(missing)}")
        for name, (lo, hi) in self.angles.items():
            if not -180.0 <= lo <= hi <= 180.0:
                raise ConfigError(f"angle range '{name}' must satisfy -180 <= low <= high <= 180")


def create_corpus_config(**kwargs) -> SyntheticCorpusConfig:
    """Corpus config with defaults; unknown keys are reported and ignored"""
    known = {f.name for f in fields(SyntheticCorpusConfig)}
    for key in sorted(set(kwargs) - known):
        logger.warning("Unknown corpus config parameter '%s'", key)
    clean = {k: v for k, v in kwargs.items() if k in known}
    if "canvas" in clean:
        clean["canvas"] = tuple(clean["canvas"])
    if "angles" in clean:
        clean["angles"] = {**DEFAULT_ANGLES, **{k: tuple(v) for k, v in clean["angles"].items()}}
    if "bones" in clean:
        clean["bones"] = {**DEFAULT_BONES, **clean["bones"]}
    return SyntheticCorpusConfig(**clean)


def _unit(deg: np.ndarray) -> np.ndarray:
    rad = np.deg2rad(deg)
    return np.stack([np.cos(rad), np.sin(rad)], axis=-1)


class _AngleWalk:
    """Reflected random walk of named joint angles"""

    def __init__(self, names: List[str], ranges: Dict[str, Tuple[float, float]],
                 step: float, rng: np.random.Generator):
        self.lo = np.array([ranges[n.split(":")[0]][0] for n in names])
        self.hi = np.array([ranges[n.split(":")[0]][1] for n in names])
        self.step = step
        self.rng = rng
        self.index = {n: i for i, n in enumerate(names)}
        self.values = rng.uniform(self.lo, self.hi)

    def advance(self) -> None:
        v = self.values + self.rng.normal(0.0, self.step, size=self.values.size)
        span = np.maximum(self.hi - self.lo, 1e-12)
        # reflect into [lo, hi]
        u = np.mod(v - self.lo, 2 * span)
        self.values = self.lo + np.where(u > span, 2 * span - u, u)

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.index[name]])


def _hand_chain(
    wrist: np.ndarray,
    direction_deg: float,
    mirror: float,
    bones: Dict[str, float],
    walk: _AngleWalk,
    side: str,
) -> np.ndarray:
    """21 hand keypoints (model units); flexion bends toward the palm side"""
    pts = np.zeros((NUM_HAND_FULL, 2))
    pts[0] = wrist

    # thumb: wrist -> cmc -> mcp -> ip -> tip
    heading = direction_deg + mirror * THUMB_SPLAY
    pos = wrist
    for joint, bone, flex in (
        (1, "thumb_base", 0.0),
        (2, "thumb_mcp", walk[f"thumb:{side}:0"]),
        (3, "thumb_ip", walk[f"thumb:{side}:1"]),
        (4, "thumb_tip", walk[f"thumb:{side}:2"]),
    ):
        heading += mirror * flex
        pos = pos + bones[bone] * _unit(np.array(heading))
        pts[joint] = pos

    for f, (base, splay, scale) in enumerate(zip(FINGER_BASES, FINGER_SPLAY, FINGER_SCALE)):
        palm_dir = direction_deg + mirror * splay
        pos = wrist + bones["palm"] * _unit(np.array(palm_dir))
        pts[base] = pos
        heading = palm_dir
        for k, (bone, joint_name) in enumerate(
            (("finger_prox", "mcp"), ("finger_mid", "pip"), ("finger_dist", "dip"))
        ):
            heading -= mirror * walk[f"{joint_name}:{side}:{f}"]
            pos = pos + scale * bones[bone] * _unit(np.array(heading))
            pts[base + 1 + k] = pos
    return pts


def _walk_names() -> List[str]:
    names = []
    for side in ("left", "right"):
        names += [f"shoulder:{side}", f"elbow:{side}", f"wrist:{side}"]
        names += [f"thumb:{side}:{k}" for k in range(3)]
        for f in range(4):
            names += [f"mcp:{side}:{f}", f"pip:{side}:{f}", f"dip:{side}:{f}"]
    return names


def _model_frame(bones: Dict[str, float], walk: _AngleWalk) -> Dict[str, np.ndarray]:
    """One frame in model units: x right, y down, neck at the origin"""
    body = np.zeros((NUM_BODY_FULL, 2))
    neck = np.zeros(2)
    nose = neck + np.array([0.0, -bones["neck"]])
    body[0] = nose
    # face points around the nose
    for i, off in zip(range(1, 11), (
        (0.06, -0.05), (0.09, -0.05), (0.12, -0.05),
        (-0.06, -0.05), (-0.09, -0.05), (-0.12, -0.05),
        (0.2, 0.0), (-0.2, 0.0), (0.05, 0.08), (-0.05, 0.08),
    )):
        body[i] = nose + np.array(off)

    hands = {}
    for side, mirror, shoulder_idx, elbow_idx, wrist_idx in (
        ("left", 1.0, 11, 13, 15),
        ("right", -1.0, 12, 14, 16),
    ):
        shoulder = neck + np.array([0.5 * mirror, 0.0])
        # 90 deg = straight down; outward rotates toward +mirror x
        upper = 90.0 - mirror * walk[f"shoulder:{side}"]
        elbow = shoulder + bones["upper_arm"] * _unit(np.array(upper))
        fore = upper - mirror * walk[f"elbow:{side}"]
        wrist = elbow + bones["forearm"] * _unit(np.array(fore))
        body[shoulder_idx], body[elbow_idx], body[wrist_idx] = shoulder, elbow, wrist

        hand_dir = fore + mirror * walk[f"wrist:{side}"]
        hand = _hand_chain(wrist, hand_dir, mirror, bones, walk, side)
        hands[side] = hand
        # body-model hand points: pinky 17/18, index 19/20, thumb 21/22
        offset = 0 if side == "left" else 1
        body[17 + offset] = hand[17]
        body[19 + offset] = hand[5]
        body[21 + offset] = hand[2]

    for i, mirror in ((23, 1.0), (24, -1.0)):
        body[i] = neck + np.array([0.4 * mirror, bones["torso"]])
    # legs hang below the hips
    for i, (src, dy) in zip(range(25, 33), ((23, 0.9), (24, 0.9), (23, 1.8), (24, 1.8),
                                            (23, 1.9), (24, 1.9), (23, 1.95), (24, 1.95))):
        body[i] = body[src] + np.array([0.0, dy])
    return {"body": body, "left": hands["left"], "right": hands["right"]}


def _fit_transform(
    frames: List[Dict[str, np.ndarray]],
    cfg: SyntheticCorpusConfig,
    rng: Optional[np.random.Generator],
) -> Tuple[np.ndarray, float, np.ndarray]:
    """
    Rotation, scale (px per model unit) and pixel offset for one sequence;
    without `rng` the figure is upright, at 90% of the largest fitting scale
    and centred
    """
    theta = np.deg2rad(rng.uniform(-cfg.rotation_deg, cfg.rotation_deg)) if rng is not None else 0.0
    rot = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
    # upper body plus hands must fit; legs are not tracked as visible
    pts = np.concatenate(
        [np.concatenate([f["body"][:25], f["left"], f["right"]]) for f in frames]
    ) @ rot.T
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    width, height = cfg.canvas
    usable = np.array([width, height], dtype=np.float64) * (1 - 2 * cfg.margin)
    extent = np.maximum(hi - lo, 1e-9)
    max_scale = float(np.min(usable / extent))
    scale = max_scale * (rng.uniform(0.75, 1.0) if rng is not None else 0.9)
    slack = usable - extent * scale
    place = rng.uniform(0.0, 1.0, size=2) if rng is not None else np.full(2, 0.5)
    offset = np.array([width, height]) * cfg.margin + place * slack - lo * scale
    return rot, scale, offset


def _to_rows(points: np.ndarray, visible: np.ndarray, rot: np.ndarray, scale: float,
             offset: np.ndarray, canvas: Tuple[int, int]) -> np.ndarray:
    px = points @ rot.T * scale + offset
    xy = px / np.asarray(canvas, dtype=np.float64)
    # legs may leave the frame; they are invisible
    xy = np.where(visible[:, None], xy, np.clip(xy, 0.0, 1.0))
    return np.column_stack([xy, visible.astype(np.float64)])


def generate_poses(cfg: Optional[SyntheticCorpusConfig] = None) -> List[FullPose]:
    """
    Deterministic corpus for a config

    Returns:
        cfg.n_frames FullPose objects, sequences back to back; timestamps
        advance by frame_interval_ms per frame
    """
    cfg = cfg or SyntheticCorpusConfig()
    rng = np.random.default_rng(cfg.seed)
    poses: List[FullPose] = []
    body_visible = np.zeros(NUM_BODY_FULL, dtype=bool)
    body_visible[:25] = True
    names = _walk_names()
    step = cfg.step_deg

    while len(poses) < cfg.n_frames:
        count = min(cfg.sequence_length, cfg.n_frames - len(poses))
        jitter = rng.uniform(1 - cfg.bone_jitter, 1 + cfg.bone_jitter, size=len(cfg.bones))
        bones = {name: cfg.bones[name] * j for name, j in zip(sorted(cfg.bones), jitter)}
        walk = _AngleWalk(names, cfg.angles, step, rng)
        frames = []
        for _ in range(count):
            frames.append(_model_frame(bones, walk))
            walk.advance()
        rot, scale, offset = _fit_transform(frames, cfg, rng)
        missing = rng.random((count, 2)) < cfg.hand_missing_prob
        for k, frame in enumerate(frames):
            hands = []
            for h, side in enumerate(("left", "right")):
                vis = np.full(NUM_HAND_FULL, not missing[k, h])
                hands.append(_to_rows(frame[side], vis, rot, scale, offset, cfg.canvas))
            poses.append(FullPose(
                body=_to_rows(frame["body"], body_visible, rot, scale, offset, cfg.canvas),
                left_hand=hands[0],
                right_hand=hands[1],
                t_ms=len(poses) * cfg.frame_interval_ms,
            ))
    logger.debug("generated %d synthetic poses (seed=%d)", len(poses), cfg.seed)
    return poses


def generate_corpus(cfg: Optional[SyntheticCorpusConfig], filepath: Union[str, Path]) -> int:
    """
    Write the corpus as JSON Lines; the same config yields a byte-identical file

    Returns:
        Number of frames written
    """
    cfg = cfg or SyntheticCorpusConfig()
    count = save_pose_file(generate_poses(cfg), filepath)
    logger.info("wrote %d poses to %s", count, filepath)
    return count


def static_pose(
    cfg: Optional[SyntheticCorpusConfig] = None,
    raised_arms: bool = True,
) -> FullPose:
    """
    A single reproducible pose; with `raised_arms` both forearms point up and
    fingers are extended
    """
    cfg = cfg or SyntheticCorpusConfig()
    angles = dict(cfg.angles)
    if raised_arms:
        angles.update({
            "shoulder": (40.0, 40.0), "elbow": (140.0, 140.0), "wrist": (0.0, 0.0),
            "thumb": (10.0, 10.0), "mcp": (0.0, 0.0), "pip": (0.0, 0.0), "dip": (0.0, 0.0),
        })
    walk = _AngleWalk(_walk_names(), angles, 0.0, np.random.default_rng(cfg.seed))
    frame = _model_frame(dict(cfg.bones), walk)
    rot, scale, offset = _fit_transform([frame], cfg, None)
    body_visible = np.zeros(NUM_BODY_FULL, dtype=bool)
    body_visible[:25] = True
    hand_visible = np.ones(NUM_HAND_FULL, dtype=bool)
    return FullPose(
        body=_to_rows(frame["body"], body_visible, rot, scale, offset, cfg.canvas),
        left_hand=_to_rows(frame["left"], hand_visible, rot, scale, offset, cfg.canvas),
        right_hand=_to_rows(frame["right"], hand_visible, rot, scale, offset, cfg.canvas),
    )


def bone_lengths_px(pose: FullPose, canvas: Tuple[int, int]) -> np.ndarray:
    """Pixel lengths of the 20 finger bones of both hands (left then right)"""
    scale = np.asarray(canvas, dtype=np.float64)
    out = []
    for hand in (pose.left_hand, pose.right_hand):
        xy = hand[:, :2] * scale
        for chain in ((0, 1, 2, 3, 4), (0, 5, 6, 7, 8), (0, 9, 10, 11, 12),
                      (0, 13, 14, 15, 16), (0, 17, 18, 19, 20)):
            for a, b in zip(chain[:-1], chain[1:]):
                out.append(math.hypot(*(xy[b] - xy[a])))
    return np.asarray(out)
