"""
Skeleton rasterisation with OpenCV
"""
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union
import json
import logging

import cv2
import numpy as np

from .errors import ChirpPoseError, ConfigError
from .pose_core import NUM_BODY, NUM_HAND_FULL
from .renderer import DEFAULT_CANVAS, ReconstructedPose

logger = logging.getLogger(__name__)

# Body slots: nose, l/r shoulder, l/r elbow, l/r wrist, mid-hip
BODY_EDGES = (
    (0, 1), (0, 2), (1, 2),
    (1, 3), (3, 5),
    (2, 4), (4, 6),
    (1, 7), (2, 7),
)

FINGERS = {
    "thumb": (0, 1, 2, 3, 4),
    "index": (0, 5, 6, 7, 8),
    "middle": (0, 9, 10, 11, 12),
    "ring": (0, 13, 14, 15, 16),
    "pinky": (0, 17, 18, 19, 20),
}

# BGR
FINGER_COLORS = {
    "thumb": (0, 0, 255),
    "index": (0, 200, 255),
    "middle": (0, 200, 0),
    "ring": (255, 128, 0),
    "pinky": (255, 0, 200),
}
BODY_COLOR = (220, 220, 220)
WRIST_COLOR = (160, 160, 160)
BACKGROUND = (0, 0, 0)

HAND_EDGES = tuple(
    (chain[i], chain[i + 1]) for chain in FINGERS.values() for i in range(len(chain) - 1)
)


def _joint_colors() -> List[Tuple[int, int, int]]:
    colors = [WRIST_COLOR] * NUM_HAND_FULL
    for name, chain in FINGERS.items():
        for joint in chain[1:]:
            colors[joint] = FINGER_COLORS[name]
    return colors


JOINT_COLORS = _joint_colors()


def to_pixels(points: np.ndarray, canvas: Tuple[int, int]) -> np.ndarray:
    """
    Normalized (x, y) -> integer pixel (floor(x*W + 0.5), floor(y*H + 0.5))

    Example:
        >>> to_pixels(np.array([[0.5, 0.5]]), (1280, 720))
        array([[640, 360]])
    """
    scale = np.asarray(canvas, dtype=np.float64)
    return np.floor(np.asarray(points, dtype=np.float64) * scale + 0.5).astype(np.int64)


def _check_canvas(canvas: Tuple[int, int]) -> Tuple[int, int]:
    width, height = int(canvas[0]), int(canvas[1])
    if width <= 0 or height <= 0:
        raise ConfigError(f"canvas must be positive, got {canvas}")
    return width, height


def _draw_chain(img: np.ndarray, pts: np.ndarray, edges, color_of, radius: int) -> None:
    for a, b in edges:
        cv2.line(img, tuple(int(v) for v in pts[a]), tuple(int(v) for v in pts[b]),
                 color_of(b), 2, lineType=cv2.LINE_8)
    for i, p in enumerate(pts):
        cv2.circle(img, (int(p[0]), int(p[1])), radius, color_of(i), -1, lineType=cv2.LINE_8)


def render_skeleton(
    pose: ReconstructedPose,
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
) -> np.ndarray:
    """
    Draw body and hand skeletons on a black canvas

    Fingers are colored by finger (thumb red, index orange, middle green,
    ring blue, pinky magenta). Absent hands are skipped.

    Args:
        pose: 8 body keypoints and up to two 21-keypoint hands
        canvas: (width, height) in pixels

    Returns:
        (height, width, 3) uint8 BGR image

    Raises:
        ConfigError: zero or negative canvas
    """
    width, height = _check_canvas(canvas)
    img = np.zeros((height, width, 3), dtype=np.uint8)
    img[:] = BACKGROUND

    body = to_pixels(np.asarray(pose.body)[:NUM_BODY], (width, height))
    _draw_chain(img, body, BODY_EDGES, lambda _: BODY_COLOR, 4)

    for hand in (pose.left_hand, pose.right_hand):
        if hand is None:
            continue
        pts = to_pixels(np.asarray(hand).reshape(NUM_HAND_FULL, 2), (width, height))
        _draw_chain(img, pts, HAND_EDGES, lambda j: JOINT_COLORS[j], 3)
    return img


def write_ppm(img: np.ndarray, filepath: Union[str, Path]) -> None:
    """Binary PPM (P6) writer for BGR images"""
    height, width = img.shape[:2]
    with open(filepath, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img[:, :, ::-1]).tobytes())


def save_image(img: np.ndarray, filepath: Union[str, Path]) -> Path:
    """
    Write PNG through OpenCV; `.ppm` paths, or a PNG encoder failure, use
    the PPM writer

    Returns:
        The path actually written
    """
    path = Path(filepath)
    if path.suffix.lower() == ".ppm":
        write_ppm(img, path)
        return path
    ok = False
    try:
        ok = bool(cv2.imwrite(str(path), img))
    except cv2.error as e:
        logger.warning("OpenCV could not write %s: %s", path, e)
    if ok:
        return path
    fallback = path.with_suffix(".ppm")
    logger.warning("PNG encoding unavailable, writing %s", fallback)
    write_ppm(img, fallback)
    return fallback


def read_ppm(filepath: Union[str, Path]) -> np.ndarray:
    with open(filepath, "rb") as fh:
        data = fh.read()
    parts = data.split(maxsplit=4)
    if len(parts) < 5 or parts[0] != b"P6":
        raise ChirpPoseError(f"{filepath}: not a binary PPM file")
    width, height = int(parts[1]), int(parts[2])
    pixels = np.frombuffer(parts[4][: width * height * 3], dtype=np.uint8)
    return pixels.reshape(height, width, 3)[:, :, ::-1].copy()


def render_frames(
    poses: Iterable[ReconstructedPose],
    outdir: Union[str, Path],
    canvas: Tuple[int, int] = DEFAULT_CANVAS,
    image_format: str = "png",
    render_dropped: bool = False,
) -> List[Dict[str, object]]:
    """
    Render one image per displayed frame and write `index.json`

    Frames flagged erroneous are dropped (listed in the index with a null
    file) unless `render_dropped` is set.

    Returns:
        Index entries (frame, t_ms, file, erroneous, loss)
    """
    if image_format not in ("png", "ppm"):
        raise ConfigError(f"image_format must be 'png' or 'ppm', got '{image_format}'")
    _check_canvas(canvas)
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    index = []
    for i, pose in enumerate(poses):
        entry: Dict[str, object] = {
            "frame": i,
            "t_ms": int(pose.t_ms),
            "file": None,
            "erroneous": bool(pose.erroneous),
            "loss": None if not np.isfinite(pose.loss) else float(pose.loss),
        }
        if render_dropped or not pose.erroneous:
            written = save_image(render_skeleton(pose, canvas), out / f"frame_{i:05d}.{image_format}")
            entry["file"] = written.name
        index.append(entry)
    with open(out / "index.json", "w", encoding="utf-8") as fh:
        json.dump({"canvas": list(canvas), "frames": index}, fh, indent=2)
    logger.info("rendered %d of %d frames to %s",
                sum(e["file"] is not None for e in index), len(index), out)
    return index
