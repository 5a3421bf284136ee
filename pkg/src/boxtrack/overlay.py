"""Wireframe overlays written as binary PPM images."""

from pathlib import Path
from typing import Iterable, List, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw

from .geometry import BOX_EDGES, CameraIntrinsics, KeypointSet2D
from .logging_config import get_logger

logger = get_logger(__name__)

BACKGROUND = (255, 255, 255)
GT_COLOUR = (160, 160, 160)
PALETTE = (
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (128, 128, 0),
)
MARKER_HALF = 2
# Pillow's rasterizer is only well behaved for moderate coordinates.
MAX_COORDINATE = 1e5

FrameOverlay = Tuple[
    int, Sequence[Tuple[int, KeypointSet2D]], Sequence[KeypointSet2D]
]


def track_colour(track_id: int) -> Tuple[int, int, int]:
    return PALETTE[(track_id - 1) % len(PALETTE)]


def _pixel(point: np.ndarray) -> Tuple[int, int]:
    return int(round(float(point[0]))), int(round(float(point[1])))


def _draw_box(
    draw: ImageDraw.ImageDraw,
    kp: KeypointSet2D,
    colour: Tuple[int, int, int],
) -> None:
    points = kp.points
    if np.any(np.abs(points) > MAX_COORDINATE):
        return
    for a, b in BOX_EDGES:
        draw.line([_pixel(points[a]), _pixel(points[b])], fill=colour)
    for point in points:
        u, v = _pixel(point)
        r = MARKER_HALF
        draw.rectangle(
            [u - r, v - r, u + r, v + r],
            outline=colour,
        )


def render_frame(
    K: CameraIntrinsics,
    tracks: Sequence[Tuple[int, KeypointSet2D]],
    ground_truth: Sequence[KeypointSet2D] = (),
) -> Image.Image:
    """
    Draw the 12 edges and 9 keypoints of every box on a white image.

    Ground truth is drawn first in grey; tracks follow in a colour chosen
    by their id.
    """
    image = Image.new("RGB", (K.width, K.height), BACKGROUND)
    draw = ImageDraw.Draw(image)
    for kp in ground_truth:
        _draw_box(draw, kp, GT_COLOUR)
    for track_id, kp in tracks:
        _draw_box(draw, kp, track_colour(track_id))
    return image


def overlay_path(directory: str, frame_id: int) -> Path:
    return Path(directory) / f"frame_{frame_id:05d}.ppm"


def write_overlays(
    directory: str,
    K: CameraIntrinsics,
    frames: Iterable[FrameOverlay],
) -> List[Path]:
    """
    Write one P6 PPM per frame.

    Args:
        directory: Output directory, created if missing
        K: Intrinsics giving the image size
        frames: ``(frame_id, tracks, ground_truth)`` triples

    Returns:
        Paths of the written files
    """
    Path(directory).mkdir(parents=True, exist_ok=True)
    paths = []
    for frame_id, tracks, ground_truth in frames:
        path = overlay_path(directory, frame_id)
        render_frame(K, tracks, ground_truth).save(path, format="PPM")
        paths.append(path)
    logger.info(
        "Wrote overlays", extra={"directory": directory, "count": len(paths)}
    )
    return paths
