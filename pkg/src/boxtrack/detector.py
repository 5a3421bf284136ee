"""
Detection targets, decoding and the synthetic detector.

The detection target is a Gaussian heatmap centred on the projected box
centroid with standard deviations proportional to the projected box
extent, paired with a per-cell field of offsets to the eight projected
vertices. ``stub_detect`` stands in for a learned detector by perturbing
ground-truth projections.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, List, Optional, Tuple

import numpy as np

from .exceptions import DomainException
from .geometry import (
    NUM_KEYPOINTS,
    BoxPose,
    CameraIntrinsics,
    KeypointSet2D,
    keypoint_extent,
    project_box,
)
from .logging_config import get_logger
from .schemas.config import StubConfig

if TYPE_CHECKING:
    from .sim import Scene

logger = get_logger(__name__)

DEFAULT_GRID: Tuple[int, int] = (40, 30)
DEFAULT_STRIDE = 16.0
DEFAULT_BETA = 0.1
FIELD_CHANNELS = 2 * (NUM_KEYPOINTS - 1)


def _cell_centers(grid: Tuple[int, int], stride: float) -> np.ndarray:
    """Pixel centres of all cells as a (rows, cols, 2) array."""
    cols, rows = grid
    u = (np.arange(cols) + 0.5) * stride
    v = (np.arange(rows) + 0.5) * stride
    uu, vv = np.meshgrid(u, v)
    return np.stack((uu, vv), axis=-1)


def _check_grid(grid: Tuple[int, int], stride: float) -> None:
    if len(grid) != 2 or min(grid) <= 0:
        raise DomainException("grid dimensions must be positive")
    if stride <= 0:
        raise DomainException("stride must be positive")


@dataclass(frozen=True, eq=False)
class Heatmap:
    """Row-major grid of centre likelihoods in [0, 1].

    Attributes:
        values: (height, width) array
        stride: Pixels per cell
    """

    values: np.ndarray
    stride: float = DEFAULT_STRIDE

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 2 or min(values.shape) == 0:
            raise DomainException("heatmap must be a non-empty 2D grid")
        if self.stride <= 0:
            raise DomainException("stride must be positive")
        if np.any(values < 0) or np.any(values > 1):
            raise DomainException("heatmap values must lie in [0, 1]")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def width(self) -> int:
        return int(self.values.shape[1])

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    def cell_center(self, row: int, col: int) -> np.ndarray:
        return np.array(
            [(col + 0.5) * self.stride, (row + 0.5) * self.stride]
        )

    def sample(self, u: float, v: float) -> float:
        """Bilinear read at a pixel position, clamped to the grid."""
        gx = min(max(u / self.stride - 0.5, 0.0), self.width - 1.0)
        gy = min(max(v / self.stride - 0.5, 0.0), self.height - 1.0)
        c0 = min(int(np.floor(gx)), self.width - 1)
        r0 = min(int(np.floor(gy)), self.height - 1)
        c1 = min(c0 + 1, self.width - 1)
        r1 = min(r0 + 1, self.height - 1)
        fx = gx - c0
        fy = gy - r0
        top = (1 - fx) * self.values[r0, c0] + fx * self.values[r0, c1]
        bottom = (1 - fx) * self.values[r1, c0] + fx * self.values[r1, c1]
        return float((1 - fy) * top + fy * bottom)


@dataclass(frozen=True, eq=False)
class VertexField:
    """Per-cell pixel offsets from the cell centre to vertices 1..8.

    ``offsets[r, c]`` holds ``(du1, dv1, ..., du8, dv8)``.
    """

    offsets: np.ndarray

    def __post_init__(self) -> None:
        offsets = np.array(self.offsets, dtype=float)
        if offsets.ndim != 3 or offsets.shape[2] != FIELD_CHANNELS:
            raise DomainException(
                f"vertex field must have shape (rows, cols, {FIELD_CHANNELS})"
            )
        offsets.setflags(write=False)
        object.__setattr__(self, "offsets", offsets)

    @property
    def shape(self) -> Tuple[int, int]:
        return int(self.offsets.shape[0]), int(self.offsets.shape[1])


@dataclass(frozen=True, eq=False)
class Detection:
    """Nine keypoints reported by a detector for one capture frame.

    ``object_index`` is the ground-truth label attached by the synthetic
    detector; the tracking pipeline ignores it.
    """

    keypoints: KeypointSet2D
    score: float
    frame_id: int
    object_index: Optional[int] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise DomainException("detection score must lie in [0, 1]")
        if self.frame_id < 0:
            raise DomainException("detection frame_id must be >= 0")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Detection):
            return NotImplemented
        return (
            self.keypoints == other.keypoints
            and self.score == other.score
            and self.frame_id == other.frame_id
            and self.object_index == other.object_index
        )


def render_gt_heatmap(
    K: CameraIntrinsics,
    pose: BoxPose,
    beta: float = DEFAULT_BETA,
    grid: Tuple[int, int] = DEFAULT_GRID,
    stride: float = DEFAULT_STRIDE,
) -> Heatmap:
    """
    Render the Gaussian centre target of a box.

    Args:
        K: Camera intrinsics
        pose: Box pose in the camera frame
        beta: Ratio of the Gaussian deviation to the projected extent
        grid: Grid size in cells as (width, height)
        stride: Pixels per cell

    Raises:
        DomainException: If the projected centre is outside the viewport
            or the projection has no extent
    """
    if beta <= 0:
        raise DomainException("beta must be positive")
    _check_grid(grid, stride)

    kp = project_box(K, pose)
    u0, v0 = kp.center
    if not K.contains(u0, v0):
        raise DomainException("projected centre lies outside the viewport")
    extent = keypoint_extent(kp)
    sigma_u = beta * extent.width
    sigma_v = beta * extent.height
    if sigma_u <= 0 or sigma_v <= 0:
        raise DomainException("projected box has no extent")

    centers = _cell_centers(grid, stride)
    du = centers[..., 0] - u0
    dv = centers[..., 1] - v0
    values = np.exp(
        -(du**2 / (2 * sigma_u**2) + dv**2 / (2 * sigma_v**2))
    )
    return Heatmap(values, stride)


def render_vertex_field(
    K: CameraIntrinsics,
    pose: BoxPose,
    grid: Tuple[int, int] = DEFAULT_GRID,
    stride: float = DEFAULT_STRIDE,
) -> VertexField:
    """Render the exact vertex offset field of a box."""
    _check_grid(grid, stride)
    kp = project_box(K, pose)
    centers = _cell_centers(grid, stride)
    offsets = kp.points[None, None, 1:, :] - centers[:, :, None, :]
    rows, cols = centers.shape[:2]
    return VertexField(offsets.reshape(rows, cols, FIELD_CHANNELS))


def _local_maxima(values: np.ndarray) -> np.ndarray:
    padded = np.pad(values, 1, mode="constant", constant_values=-np.inf)
    rows, cols = values.shape
    is_max = np.ones_like(values, dtype=bool)
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            if dr == 0 and dc == 0:
                continue
            neighbour = padded[1 + dr:1 + dr + rows, 1 + dc:1 + dc + cols]
            is_max &= values >= neighbour
    return is_max


def decode(
    h: Heatmap,
    f: VertexField,
    peak_threshold: float = 0.5,
    nms_radius: float = 2.0,
    frame_id: int = 0,
) -> List[Detection]:
    """
    Decode detections from a heatmap and its vertex field.

    Peaks are local maxima at or above ``peak_threshold``, visited by
    value descending (row-major index breaks ties); a peak within
    ``nms_radius`` cells of an accepted one is suppressed.

    Raises:
        DomainException: If the grids have different dimensions
    """
    if f.shape != h.values.shape:
        raise DomainException("heatmap and vertex field grids differ")

    values = h.values
    candidates = np.flatnonzero(
        (_local_maxima(values) & (values >= peak_threshold)).ravel()
    )
    order = sorted(candidates, key=lambda i: (-values.flat[i], i))

    accepted: List[Tuple[int, int]] = []
    for index in order:
        row, col = divmod(int(index), h.width)
        if any(
            np.hypot(row - r, col - c) <= nms_radius for r, c in accepted
        ):
            continue
        accepted.append((row, col))

    detections = []
    for row, col in accepted:
        center = h.cell_center(row, col)
        vertices = center + f.offsets[row, col].reshape(-1, 2)
        keypoints = KeypointSet2D(np.vstack((center, vertices)))
        detections.append(
            Detection(keypoints, float(values[row, col]), frame_id)
        )
    return detections


def stub_detect(
    scene: "Scene",
    frame_id: int,
    cfg: StubConfig,
    object_index: int = 0,
) -> Optional[Detection]:
    """
    Synthetic detection of one object at a capture frame.

    The generator is seeded with ``(cfg.seed, frame_id, object_index)``
    and draws the dropout variate first, then 18 standard normals for
    the keypoint noise, so every detection replays independently of the
    others.

    Returns:
        The detection, or None off-cadence, when dropped or when the box
        is not fully in front of the camera

    Raises:
        DomainException: If ``frame_id`` or ``object_index`` is not in the
            scene
    """
    if not 0 <= frame_id < len(scene.frames):
        raise DomainException(f"frame {frame_id} is not in the scene")
    poses = scene.frames[frame_id].gt_poses
    if not 0 <= object_index < len(poses):
        raise DomainException(f"object {object_index} is not in the scene")
    if frame_id % cfg.cadence:
        return None

    rng = np.random.default_rng([cfg.seed, frame_id, object_index])
    dropped = rng.random() < cfg.dropout
    noise = cfg.noise_sigma * rng.standard_normal((NUM_KEYPOINTS, 2))
    if dropped:
        return None

    try:
        truth = project_box(scene.intrinsics, poses[object_index])
    except DomainException:
        logger.debug(
            "Object not fully in front of the camera",
            extra={"frame_id": frame_id, "object_index": object_index},
        )
        return None

    rms = float(np.sqrt(np.mean(np.sum(noise**2, axis=1))))
    return Detection(
        KeypointSet2D(truth.points + noise),
        1.0 / (1.0 + rms),
        frame_id,
        object_index,
    )


def stub_detect_all(
    scene: "Scene", frame_id: int, cfg: StubConfig
) -> List[Detection]:
    """Synthetic detections of every object at a capture frame."""
    n_objects = len(scene.frames[frame_id].gt_poses)
    detections = []
    for index in range(n_objects):
        detection = stub_detect(scene, frame_id, cfg, index)
        if detection is not None:
            detections.append(detection)
    return detections
