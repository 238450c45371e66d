"""
Pose file I/O and the PoseDataset container
"""
from typing import Callable, Iterable, List, Optional, Tuple, TypeVar, Union
from pathlib import Path
import json
import logging

import numpy as np

from .errors import ChirpPoseError, ShapeError
from .pose_core import (
    FullPose,
    HAND_SOURCE,
    LEFT_SLICE,
    NUM_HAND_FULL,
    RIGHT_SLICE,
    Side,
    TransmitPose,
    select_keypoints,
)

logger = logging.getLogger(__name__)

T = TypeVar("T")


class PoseFileError(ChirpPoseError, ValueError):
    """Pose file line cannot be parsed"""


def _read_lines(filepath: Union[str, Path]) -> List[str]:
    try:
        with open(filepath, "r", encoding="utf-8") as fh:
            return fh.readlines()
    except OSError as e:
        raise PoseFileError(f"cannot read {filepath}: {e}") from e


def _load_lines(filepath: Union[str, Path], parse: Callable[[dict], T]) -> List[T]:
    items = []
    for lineno, line in enumerate(_read_lines(filepath), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            items.append(parse(json.loads(line)))
        except (KeyError, TypeError, ValueError) as e:
            raise PoseFileError(f"{filepath}:{lineno}: {e}") from e
    return items


def _save_lines(objs: Iterable[dict], filepath: Union[str, Path]) -> int:
    count = 0
    with open(filepath, "w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(json.dumps(obj, separators=(",", ":")))
            fh.write("\n")
            count += 1
    return count


def load_pose_file(filepath: Union[str, Path]) -> List[FullPose]:
    """
    Load a JSON Lines pose file

    Each non-empty line is one frame:
    {"t_ms": int, "body": [[x, y, vis] x 33], "left": [[x, y, vis] x 21], "right": [...]}

    Args:
        filepath: Path to .jsonl file

    Returns:
        List of FullPose in file order
    """
    poses = _load_lines(filepath, FullPose.from_json)
    logger.debug("loaded %d poses from %s", len(poses), filepath)
    return poses


def dumps_pose(pose: FullPose) -> str:
    """Canonical one-line encoding (fixed key order, repr floats)"""
    return json.dumps(pose.to_json(), separators=(",", ":"))


def save_pose_file(poses: Iterable[FullPose], filepath: Union[str, Path]) -> int:
    """
    Write poses as JSON Lines; identical poses always produce identical bytes

    Returns:
        Number of frames written
    """
    return _save_lines((p.to_json() for p in poses), filepath)


def load_received_file(filepath: Union[str, Path]) -> List[TransmitPose]:
    """Received poses, one {"t_ms", "left_present", "right_present", "keypoints"} per line"""
    return _load_lines(filepath, TransmitPose.from_json)


def save_received_file(poses: Iterable[TransmitPose], filepath: Union[str, Path]) -> int:
    return _save_lines((p.to_json() for p in poses), filepath)


def load_transmit_poses(filepath: Union[str, Path]) -> List[TransmitPose]:
    """
    Transmitted keypoints from either a pose file or a received-pose file
    (told apart by the first line)
    """
    first = next((line for line in _read_lines(filepath) if line.strip()), "")
    if '"keypoints"' in first:
        return load_received_file(filepath)
    return [select_keypoints(p) for p in load_pose_file(filepath)]


class PoseDataset:
    """
    Pose container (PyTorch-like API)

    Example:
        >>> dataset = PoseDataset.from_file("corpus.jsonl")
        >>> train, test = dataset.split(0.8, seed=0)
        >>> X = train.transmit_matrix()
    """

    def __init__(self, poses: List[FullPose]):
        self.poses = list(poses)

    @classmethod
    def from_file(cls, filepath: Union[str, Path]) -> "PoseDataset":
        return cls(load_pose_file(filepath))

    def save(self, filepath: Union[str, Path]) -> None:
        save_pose_file(self.poses, filepath)

    def split(
        self,
        train_fraction: float = 0.8,
        shuffle: bool = True,
        seed: Optional[int] = None,
    ) -> Tuple["PoseDataset", "PoseDataset"]:
        """
        Split into train and test sets

        Args:
            train_fraction: Fraction for training (0-1)
            shuffle: Shuffle before splitting
            seed: Random seed for shuffling

        Returns:
            Tuple of (train_dataset, test_dataset)
        """
        order = np.arange(len(self.poses))
        if shuffle:
            np.random.default_rng(seed).shuffle(order)
        split_idx = int(len(order) * train_fraction)
        train = [self.poses[i] for i in order[:split_idx]]
        test = [self.poses[i] for i in order[split_idx:]]
        return PoseDataset(train), PoseDataset(test)

    def shuffle(self, seed: Optional[int] = None) -> "PoseDataset":
        order = np.random.default_rng(seed).permutation(len(self.poses))
        return PoseDataset([self.poses[i] for i in order])

    def transmit_poses(self) -> List[TransmitPose]:
        return [select_keypoints(p) for p in self.poses]

    def transmit_matrix(self, complete_only: bool = True) -> np.ndarray:
        """
        Stack transmitted poses into an (n, 64) array

        Args:
            complete_only: Skip frames where a hand is absent (NaN slots)
        """
        rows = []
        for tp in self.transmit_poses():
            if complete_only and not (tp.left_present and tp.right_present):
                continue
            rows.append(tp.as_vector())
        if not rows:
            return np.zeros((0, 64))
        return np.stack(rows)

    def hand_pairs(self, side: Side) -> Tuple[np.ndarray, np.ndarray]:
        """
        Predictor training pairs for one hand

        Returns:
            (inputs (n, 24), targets (n, 42)): transmitted 12 keypoints and the
            full 21-keypoint hand, both flattened x, y per keypoint
        """
        inputs, targets = [], []
        for pose in self.poses:
            hand = pose.left_hand if side == Side.LEFT else pose.right_hand
            if int((hand[:, 2] > 0.5).sum()) < NUM_HAND_FULL:
                continue
            xy = np.clip(hand[:, :2], 0.0, 1.0)
            inputs.append(xy[list(HAND_SOURCE)].reshape(-1))
            targets.append(xy.reshape(-1))
        if not inputs:
            return np.zeros((0, 24)), np.zeros((0, 42))
        return np.stack(inputs), np.stack(targets)

    def __len__(self) -> int:
        return len(self.poses)

    def __getitem__(self, idx: Union[int, slice]) -> Union[FullPose, "PoseDataset"]:
        if isinstance(idx, slice):
            return PoseDataset(self.poses[idx])
        return self.poses[idx]

    def __iter__(self):
        return iter(self.poses)

    def __repr__(self) -> str:
        return f"<PoseDataset size={len(self)}>"


def hand_slice(side: Side) -> slice:
    return LEFT_SLICE if side == Side.LEFT else RIGHT_SLICE


def pose_vectors(poses: Iterable[TransmitPose]) -> np.ndarray:
    """Stack TransmitPose objects into an (n, 64) array"""
    rows = [p.as_vector() for p in poses]
    if not rows:
        raise ShapeError("no poses to stack")
    return np.stack(rows)
