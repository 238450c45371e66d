"""
Pose types, keypoint selection, quantization, temporal differencing and
symbol-level payload packing

Canonical transmit order (32 keypoints, x then y per keypoint):

    body  (8):  nose, left_shoulder, right_shoulder, left_elbow, right_elbow,
                left_wrist, right_wrist, mid_hip
    left  (12): wrist, thumb_mcp, thumb_tip, index_mcp, index_pip, index_tip,
                middle_mcp, middle_tip, ring_mcp, ring_tip, pinky_mcp, pinky_tip
    right (12): same order as left

A QuantizedPose only carries the parts that are present, in that order.
"""
from dataclasses import dataclass
from enum import IntEnum
from typing import Any, Dict, FrozenSet, Optional, Sequence, Union
import logging

import numpy as np

from .errors import ConfigError, MalformedFrameError, PayloadError, PoseRangeError, ShapeError

logger = logging.getLogger(__name__)


# ========== Keypoint layout ==========

NUM_BODY_FULL = 33
NUM_HAND_FULL = 21
NUM_BODY = 8
NUM_HAND = 12
NUM_TRANSMIT = NUM_BODY + 2 * NUM_HAND

QUANT_LEVELS = 127
VALUE_BITS = 7
DELTA_BITS = 3
DELTA_MIN = -4
DELTA_MAX = 3
DEFAULT_DELTA = 3
SYMBOL_BITS = 4
RANGE_TOLERANCE = 1e-6

# MediaPipe pose indices; mid-hip is the average of the two hips
BODY_SOURCE = (0, 11, 12, 13, 14, 15, 16)
HIP_SOURCE = (23, 24)
BODY_NAMES = (
    "nose", "left_shoulder", "right_shoulder", "left_elbow",
    "right_elbow", "left_wrist", "right_wrist", "mid_hip",
)

HAND_NAMES = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)
# MediaPipe hand indices of the 12 transmitted hand keypoints
HAND_SOURCE = (0, 2, 4, 5, 6, 8, 9, 12, 13, 16, 17, 20)

MIN_VISIBLE_HAND = 6

BODY_SLICE = slice(0, NUM_BODY)
LEFT_SLICE = slice(NUM_BODY, NUM_BODY + NUM_HAND)
RIGHT_SLICE = slice(NUM_BODY + NUM_HAND, NUM_TRANSMIT)


class Side(IntEnum):
    LEFT = 0
    RIGHT = 1


class FrameType(IntEnum):
    COMPLETE = 0
    DISPLACEMENT = 1
    ONE_HAND = 2
    JUST_BODY = 3


FRAME_SYMBOLS: Dict[FrameType, int] = {
    FrameType.COMPLETE: 112,
    FrameType.DISPLACEMENT: 48,
    FrameType.ONE_HAND: 71,
    FrameType.JUST_BODY: 28,
}

# Header code points for M = 16; the modem derives them for other orders
HEADER_SYMBOLS: Dict[FrameType, int] = {
    FrameType.COMPLETE: 0,
    FrameType.DISPLACEMENT: 5,
    FrameType.ONE_HAND: 10,
    FrameType.JUST_BODY: 15,
}

SIDE_SYMBOLS = {Side.LEFT: 0, Side.RIGHT: 15}

_VALUE_COUNTS = {
    FrameType.COMPLETE: 2 * NUM_TRANSMIT,
    FrameType.DISPLACEMENT: 2 * NUM_TRANSMIT,
    FrameType.ONE_HAND: 2 * (NUM_BODY + NUM_HAND),
    FrameType.JUST_BODY: 2 * NUM_BODY,
}


def payload_bytes(frame_type: FrameType) -> float:
    """Payload size in bytes (symbols x 4 bits / 8)"""
    return FRAME_SYMBOLS[FrameType(frame_type)] * SYMBOL_BITS / 8


# ========== Types ==========

@dataclass(eq=False)
class FullPose:
    """
    One frame of estimator output

    Each keypoint row is (x, y, visible). Coordinates are normalized to the
    image width/height; only visible keypoints are required to lie in [0, 1].
    """
    body: np.ndarray
    left_hand: np.ndarray
    right_hand: np.ndarray
    t_ms: int = 0

    def __post_init__(self):
        self.body = np.asarray(self.body, dtype=np.float64)
        self.left_hand = np.asarray(self.left_hand, dtype=np.float64)
        self.right_hand = np.asarray(self.right_hand, dtype=np.float64)
        for name, arr, count in (
            ("body", self.body, NUM_BODY_FULL),
            ("left", self.left_hand, NUM_HAND_FULL),
            ("right", self.right_hand, NUM_HAND_FULL),
        ):
            if arr.shape != (count, 3):
                raise ShapeError(f"{name} must have shape ({count}, 3), got {arr.shape}")
            visible = arr[:, 2] > 0.5
            xy = arr[visible, :2]
            if np.any(xy < -RANGE_TOLERANCE) or np.any(xy > 1.0 + RANGE_TOLERANCE):
                raise PoseRangeError(f"visible {name} keypoint outside [0, 1]")
        self.t_ms = int(self.t_ms)

    def to_json(self) -> dict:
        def rows(arr: np.ndarray) -> list:
            return [[float(x), float(y), int(v > 0.5)] for x, y, v in arr]

        return {
            "t_ms": self.t_ms,
            "body": rows(self.body),
            "left": rows(self.left_hand),
            "right": rows(self.right_hand),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FullPose":
        return cls(
            body=np.asarray(obj["body"], dtype=np.float64),
            left_hand=np.asarray(obj["left"], dtype=np.float64),
            right_hand=np.asarray(obj["right"], dtype=np.float64),
            t_ms=int(obj.get("t_ms", 0)),
        )


@dataclass(eq=False)
class TransmitPose:
    """
    The 32-keypoint subset selected for transmission

    Slots of an absent hand hold NaN and are never zero-filled; `visible`
    marks which slots carry a fresh estimate.
    """
    keypoints: np.ndarray
    visible: np.ndarray
    left_present: bool = True
    right_present: bool = True
    t_ms: int = 0

    def __post_init__(self):
        self.keypoints = np.asarray(self.keypoints, dtype=np.float64)
        self.visible = np.asarray(self.visible, dtype=bool)
        if self.keypoints.shape != (NUM_TRANSMIT, 2):
            raise ShapeError(f"keypoints must have shape ({NUM_TRANSMIT}, 2)")
        if self.visible.shape != (NUM_TRANSMIT,):
            raise ShapeError(f"visible must have shape ({NUM_TRANSMIT},)")

    @property
    def present_parts(self) -> FrozenSet[Side]:
        parts = set()
        if self.left_present:
            parts.add(Side.LEFT)
        if self.right_present:
            parts.add(Side.RIGHT)
        return frozenset(parts)

    @property
    def body(self) -> np.ndarray:
        return self.keypoints[BODY_SLICE]

    def hand(self, side: Side) -> np.ndarray:
        return self.keypoints[LEFT_SLICE if side == Side.LEFT else RIGHT_SLICE]

    def is_present(self, side: Side) -> bool:
        return self.left_present if side == Side.LEFT else self.right_present

    def as_vector(self) -> np.ndarray:
        """Flattened 64-vector (x, y per keypoint in canonical order)"""
        return self.keypoints.reshape(-1).copy()

    def to_json(self) -> dict:
        """Absent-hand slots are written as null coordinates"""
        rows = []
        for (x, y), v in zip(self.keypoints, self.visible):
            if np.isnan(x) or np.isnan(y):
                rows.append([None, None, 0])
            else:
                rows.append([float(x), float(y), int(v)])
        return {
            "t_ms": self.t_ms,
            "left_present": self.left_present,
            "right_present": self.right_present,
            "keypoints": rows,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "TransmitPose":
        rows = obj["keypoints"]
        xy = np.array([[np.nan if c is None else c for c in r[:2]] for r in rows], dtype=np.float64)
        return cls(
            keypoints=xy,
            visible=np.array([bool(r[2]) for r in rows]),
            left_present=bool(obj.get("left_present", True)),
            right_present=bool(obj.get("right_present", True)),
            t_ms=int(obj.get("t_ms", 0)),
        )


@dataclass(eq=False)
class QuantizedPose:
    """7-bit values of the present parts: body, then left, then right"""
    values: np.ndarray
    left_present: bool = True
    right_present: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        expected = _VALUE_COUNTS[self.frame_type]
        if self.values.shape != (expected,):
            raise PayloadError(
                f"{self.frame_type.name} pose needs {expected} values, got {self.values.size}"
            )
        if np.any(self.values < 0) or np.any(self.values > QUANT_LEVELS):
            raise PayloadError("quantized values must lie in [0, 127]")

    @property
    def frame_type(self) -> FrameType:
        if self.left_present and self.right_present:
            return FrameType.COMPLETE
        if self.left_present or self.right_present:
            return FrameType.ONE_HAND
        return FrameType.JUST_BODY

    @property
    def side(self) -> Optional[Side]:
        if self.frame_type != FrameType.ONE_HAND:
            return None
        return Side.LEFT if self.left_present else Side.RIGHT

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QuantizedPose):
            return NotImplemented
        return (
            self.left_present == other.left_present
            and self.right_present == other.right_present
            and np.array_equal(self.values, other.values)
        )

    def __len__(self) -> int:
        return int(self.values.size)


@dataclass(eq=False)
class Displacement:
    """Per-coordinate deltas against the retained reference, in quantization steps"""
    deltas: np.ndarray

    def __post_init__(self):
        self.deltas = np.asarray(self.deltas, dtype=np.int64)
        if self.deltas.shape != (2 * NUM_TRANSMIT,):
            raise PayloadError(f"displacement needs {2 * NUM_TRANSMIT} deltas")
        if np.any(self.deltas < DELTA_MIN) or np.any(self.deltas > DELTA_MAX):
            raise PayloadError(f"deltas must lie in [{DELTA_MIN}, {DELTA_MAX}]")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Displacement):
            return NotImplemented
        return np.array_equal(self.deltas, other.deltas)

    def __len__(self) -> int:
        return int(self.deltas.size)


@dataclass(frozen=True)
class FullReplace:
    """diff_pose verdict: the displacement exceeds the threshold"""
    max_delta: int


@dataclass(eq=False)
class FramePayload:
    """
    Typed payload unit of 4-bit symbols (OneHand includes the side symbol)

    Frames recovered by the receiver also carry their synchronization result
    and absolute start sample; neither takes part in equality.
    """
    frame_type: FrameType
    symbols: np.ndarray
    side: Optional[Side] = None
    sync: Optional[Any] = None
    start_sample: Optional[int] = None

    def __post_init__(self):
        self.frame_type = FrameType(self.frame_type)
        self.symbols = np.asarray(self.symbols, dtype=np.int64)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FramePayload):
            return NotImplemented
        return (
            self.frame_type == other.frame_type
            and self.side == other.side
            and np.array_equal(self.symbols, other.symbols)
        )

    def __len__(self) -> int:
        return int(self.symbols.size)


# ========== Operations ==========

def round_half_away(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def select_keypoints(pose: FullPose) -> TransmitPose:
    """
    Pick the 32 transmitted keypoints from a full estimator frame

    A hand with fewer than six visible keypoints is marked absent. Coordinates
    of invisible keypoints inside a present part are clamped to [0, 1] and
    flagged in `visible` so the sender can hold its last value.
    """
    keypoints = np.full((NUM_TRANSMIT, 2), np.nan)
    visible = np.zeros(NUM_TRANSMIT, dtype=bool)

    body = pose.body
    keypoints[:7] = body[list(BODY_SOURCE), :2]
    visible[:7] = body[list(BODY_SOURCE), 2] > 0.5
    hips = body[list(HIP_SOURCE)]
    keypoints[7] = hips[:, :2].mean(axis=0)
    visible[7] = bool(np.all(hips[:, 2] > 0.5))
    keypoints[BODY_SLICE] = np.clip(keypoints[BODY_SLICE], 0.0, 1.0)

    present = {}
    for side, hand, slc in (
        (Side.LEFT, pose.left_hand, LEFT_SLICE),
        (Side.RIGHT, pose.right_hand, RIGHT_SLICE),
    ):
        hand_visible = hand[:, 2] > 0.5
        present[side] = int(hand_visible.sum()) >= MIN_VISIBLE_HAND
        if present[side]:
            keypoints[slc] = np.clip(hand[list(HAND_SOURCE), :2], 0.0, 1.0)
            visible[slc] = hand_visible[list(HAND_SOURCE)]

    return TransmitPose(
        keypoints=keypoints,
        visible=visible,
        left_present=present[Side.LEFT],
        right_present=present[Side.RIGHT],
        t_ms=pose.t_ms,
    )


def _present_mask(left_present: bool, right_present: bool) -> np.ndarray:
    mask = np.zeros(NUM_TRANSMIT, dtype=bool)
    mask[BODY_SLICE] = True
    mask[LEFT_SLICE] = left_present
    mask[RIGHT_SLICE] = right_present
    return mask


def quantize(pose: TransmitPose) -> QuantizedPose:
    """
    Quantize the present parts to 7-bit integers

    q = round_half_away_from_zero(v * 127), clamped to [0, 127].

    Raises:
        PoseRangeError: a present coordinate lies outside [0, 1] (tolerance 1e-6)
    """
    mask = _present_mask(pose.left_present, pose.right_present)
    coords = pose.keypoints[mask].reshape(-1)
    if np.any(~np.isfinite(coords)):
        raise PoseRangeError("present keypoint has no coordinate")
    if np.any(coords < -RANGE_TOLERANCE) or np.any(coords > 1.0 + RANGE_TOLERANCE):
        raise PoseRangeError(
            f"coordinate outside [0, 1]: min={coords.min():.6f} max={coords.max():.6f}"
        )
    q = np.clip(round_half_away(coords * QUANT_LEVELS), 0, QUANT_LEVELS).astype(np.int64)
    return QuantizedPose(q, pose.left_present, pose.right_present)


def dequantize(q: QuantizedPose, t_ms: int = 0) -> TransmitPose:
    """Inverse of quantize (v = q / 127); absent hands come back as NaN slots"""
    mask = _present_mask(q.left_present, q.right_present)
    keypoints = np.full((NUM_TRANSMIT, 2), np.nan)
    keypoints[mask] = (q.values.astype(np.float64) / QUANT_LEVELS).reshape(-1, 2)
    return TransmitPose(
        keypoints=keypoints,
        visible=mask.copy(),
        left_present=q.left_present,
        right_present=q.right_present,
        t_ms=t_ms,
    )


def diff_pose(
    current: QuantizedPose,
    reference: QuantizedPose,
    delta_threshold: int = DEFAULT_DELTA,
) -> Union[Displacement, FullReplace]:
    """
    Compare the current pose with the retained reference

    Returns a Displacement when every |current - reference| <= delta_threshold,
    otherwise FullReplace (the caller sends a full frame and replaces the
    reference).
    """
    if not 0 <= delta_threshold <= DELTA_MAX:
        raise ConfigError(f"delta_threshold must lie in [0, {DELTA_MAX}]")
    if len(current) != len(reference):
        raise PayloadError(
            f"pose lengths differ: current={len(current)} reference={len(reference)}"
        )
    deltas = current.values - reference.values
    max_delta = int(np.abs(deltas).max()) if deltas.size else 0
    if max_delta > delta_threshold or len(current) != 2 * NUM_TRANSMIT:
        return FullReplace(max_delta)
    return Displacement(deltas)


def apply_displacement(reference: QuantizedPose, d: Displacement) -> QuantizedPose:
    if len(reference) != len(d):
        raise PayloadError(f"reference has {len(reference)} values, displacement {len(d)}")
    values = np.clip(reference.values + d.deltas, 0, QUANT_LEVELS)
    return QuantizedPose(values, reference.left_present, reference.right_present)


def _values_to_symbols(values: np.ndarray, width: int) -> np.ndarray:
    values = np.asarray(values, dtype=np.int64)
    shifts = np.arange(width - 1, -1, -1)
    bits = ((values[:, None] >> shifts) & 1).reshape(-1)
    pad = (-bits.size) % SYMBOL_BITS
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.int64)])
    weights = 1 << np.arange(SYMBOL_BITS - 1, -1, -1)
    return bits.reshape(-1, SYMBOL_BITS) @ weights


def _symbols_to_values(symbols: np.ndarray, width: int, count: int) -> np.ndarray:
    symbols = np.asarray(symbols, dtype=np.int64)
    shifts = np.arange(SYMBOL_BITS - 1, -1, -1)
    bits = ((symbols[:, None] >> shifts) & 1).reshape(-1)[: count * width]
    weights = 1 << np.arange(width - 1, -1, -1)
    return bits.reshape(count, width) @ weights


def pack_payload(
    p: Union[QuantizedPose, Displacement],
    frame_type: FrameType,
    side: Optional[Side] = None,
) -> FramePayload:
    """
    Bit-pack values big-endian into 4-bit symbols, zero-padding the tail

    Complete/OneHand/JustBody carry 7-bit values; Displacement carries 3-bit
    two's-complement deltas. OneHand frames start with a side symbol
    (0 = left, 15 = right).
    """
    frame_type = FrameType(frame_type)
    if frame_type == FrameType.DISPLACEMENT:
        if not isinstance(p, Displacement):
            raise PayloadError("Displacement frames carry a Displacement")
        symbols = _values_to_symbols(p.deltas & 0b111, DELTA_BITS)
        return FramePayload(frame_type, symbols)

    if not isinstance(p, QuantizedPose):
        raise PayloadError(f"{frame_type.name} frames carry a QuantizedPose")
    if len(p) != _VALUE_COUNTS[frame_type]:
        raise PayloadError(
            f"{frame_type.name} needs {_VALUE_COUNTS[frame_type]} values, got {len(p)}"
        )
    symbols = _values_to_symbols(p.values, VALUE_BITS)
    if frame_type == FrameType.ONE_HAND:
        side = p.side if side is None else Side(side)
        if side is None:
            raise PayloadError("OneHand frames need a side")
        symbols = np.concatenate([[SIDE_SYMBOLS[side]], symbols])
    return FramePayload(frame_type, symbols, side)


def unpack_payload(f: FramePayload) -> Union[QuantizedPose, Displacement]:
    """
    Inverse of pack_payload

    Raises:
        MalformedFrameError: symbol count does not match the frame type
    """
    expected = FRAME_SYMBOLS[f.frame_type]
    if len(f) != expected:
        raise MalformedFrameError(
            f"{f.frame_type.name} frame needs {expected} symbols, got {len(f)}"
        )
    count = _VALUE_COUNTS[f.frame_type]
    if f.frame_type == FrameType.DISPLACEMENT:
        raw = _symbols_to_values(f.symbols, DELTA_BITS, count)
        return Displacement(np.where(raw >= 4, raw - 8, raw))

    symbols = f.symbols
    left = right = f.frame_type == FrameType.COMPLETE
    if f.frame_type == FrameType.ONE_HAND:
        # nearest of the two side code points
        side = Side.LEFT if int(symbols[0]) < 8 else Side.RIGHT
        left, right = side == Side.LEFT, side == Side.RIGHT
        symbols = symbols[1:]
    values = _symbols_to_values(symbols, VALUE_BITS, count)
    return QuantizedPose(values, left, right)


# ========== Sender / receiver state ==========

class PoseEncoder:
    """
    Sender-side pose processor

    Keeps the retained reference pose and the last transmitted value of every
    keypoint; invisible keypoints of a present part repeat their last value.

    Example:
        >>> encoder = PoseEncoder()
        >>> payload = encoder.encode(full_pose)
        >>> payload.frame_type
        <FrameType.COMPLETE: 0>
    """

    def __init__(self, delta_threshold: int = DEFAULT_DELTA):
        if not 0 <= delta_threshold <= DELTA_MAX:
            raise ConfigError(f"delta_threshold must lie in [0, {DELTA_MAX}]")
        self.delta_threshold = delta_threshold
        self._reference: Optional[QuantizedPose] = None
        self._held = np.full((NUM_TRANSMIT, 2), np.nan)

    @property
    def reference(self) -> Optional[QuantizedPose]:
        return self._reference

    def hold_missing(self, pose: TransmitPose) -> TransmitPose:
        keypoints = pose.keypoints.copy()
        present = _present_mask(pose.left_present, pose.right_present)
        stale = present & ~pose.visible & np.isfinite(self._held[:, 0])
        keypoints[stale] = self._held[stale]
        self._held[present] = keypoints[present]
        return TransmitPose(
            keypoints, pose.visible, pose.left_present, pose.right_present, pose.t_ms
        )

    def encode(self, pose: FullPose) -> FramePayload:
        tp = self.hold_missing(select_keypoints(pose))
        q = quantize(tp)
        ref = self._reference
        if (
            ref is not None
            and q.frame_type == FrameType.COMPLETE
            and ref.frame_type == FrameType.COMPLETE
        ):
            verdict = diff_pose(q, ref, self.delta_threshold)
            if isinstance(verdict, Displacement):
                return pack_payload(verdict, FrameType.DISPLACEMENT)
        self._reference = q
        return pack_payload(q, q.frame_type)


class PoseDecoder:
    """Receiver-side inverse of PoseEncoder"""

    def __init__(self):
        self._reference: Optional[QuantizedPose] = None
        self.orphan_displacements = 0

    @property
    def reference(self) -> Optional[QuantizedPose]:
        return self._reference

    def decode(self, payload: FramePayload) -> Optional[QuantizedPose]:
        """
        Reconstruct the quantized pose carried by a payload

        Returns None for a displacement that has no complete reference yet.
        """
        unpacked = unpack_payload(payload)
        if isinstance(unpacked, Displacement):
            ref = self._reference
            if ref is None or ref.frame_type != FrameType.COMPLETE:
                self.orphan_displacements += 1
                logger.debug("displacement without a complete reference dropped")
                return None
            return apply_displacement(ref, unpacked)
        self._reference = unpacked
        return unpacked


def encode_sequence(poses: Sequence[FullPose], delta_threshold: int = DEFAULT_DELTA):
    """Encode a pose sequence with a fresh PoseEncoder"""
    encoder = PoseEncoder(delta_threshold)
    return [encoder.encode(p) for p in poses]
