"""
Deterministic synthetic scenes.

Boxes rest on the world ground plane ``z = 0`` (world ``+z`` is up) and
are watched by a moving pinhole camera. Each object carries a patch of
points on the plane of its base; the per-frame correspondences are the
projections of those points in consecutive frames.

All randomness comes from one ``numpy.random.default_rng(cfg.seed)``
consumed in this order:

1. box sizes, shape (n_objects, 3), then yaws, shape (n_objects,);
2. point layouts, one (count, 2) uniform draw per object;
3. camera jitter, rotation vectors then offsets, each (n_frames, 3),
   drawn for every camera motion but used only by ``handheld``;
4. per frame ``t >= 1``: prev noise, curr noise (each (m, 2)), outlier
   flags (m,) and outlier positions (m, 2), for all ``m`` points before
   visibility filtering.
"""

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np
from scipy.spatial.transform import Rotation

from .detector import Detection, stub_detect_all
from .exceptions import DomainException, SceneGenerationException
from .geometry import (
    BoxPose,
    CameraIntrinsics,
    project_box,
    project_points,
)
from .homography import Correspondences, Homography, apply_points
from .logging_config import get_logger
from .schemas.config import CameraConfig, StubConfig, TrajectoryConfig

logger = get_logger(__name__)

WORLD_UP = np.array([0.0, 0.0, 1.0])
START_AZIMUTH_DEG = -90.0


@dataclass(frozen=True, eq=False)
class SceneFrame:
    """Ground truth and observations of one frame.

    Attributes:
        frame_id: Index of the frame
        camera_rotation: World-to-camera rotation
        camera_translation: World-to-camera translation
        gt_poses: Camera-frame pose of every object
        correspondences: Point tracks from frame ``frame_id - 1``
        detection_events: Detections delivered at this frame, stamped with
            their capture frame
        detector_runs: Capture frames of the detector runs delivered at
            this frame, including runs whose detections were all dropped
    """

    frame_id: int
    camera_rotation: np.ndarray
    camera_translation: np.ndarray
    gt_poses: Tuple[BoxPose, ...]
    correspondences: Correspondences
    detection_events: Tuple[Detection, ...] = ()
    detector_runs: Tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class Scene:
    """A generated sequence plus the configuration that produced it."""

    intrinsics: CameraIntrinsics
    frames: Tuple[SceneFrame, ...]
    config: TrajectoryConfig
    stub: Optional[StubConfig] = None

    @property
    def n_objects(self) -> int:
        return len(self.frames[0].gt_poses) if self.frames else 0

    @property
    def seed(self) -> int:
        return self.config.seed


def intrinsics_from_config(cfg: CameraConfig) -> CameraIntrinsics:
    return CameraIntrinsics(
        fx=cfg.fx,
        fy=cfg.fy,
        cx=cfg.cx,
        cy=cfg.cy,
        width=cfg.width,
        height=cfg.height,
    )


def look_at(
    center: np.ndarray, target: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """World-to-camera rotation and translation of a level camera.

    The camera looks along ``+z``, image ``x`` points right and image
    ``y`` points down.
    """
    forward = target - center
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, WORLD_UP)
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise SceneGenerationException("camera looks straight up or down")
    right = right / norm
    down = np.cross(forward, right)
    rotation = np.vstack((right, down, forward))
    return rotation, -rotation @ center


class _CameraPath:
    """Camera pose at each frame for one motion family."""

    def __init__(
        self,
        cfg: TrajectoryConfig,
        target: np.ndarray,
        jitter_rotvec: np.ndarray,
        jitter_offset: np.ndarray,
    ):
        self.cfg = cfg
        self.target = target
        self.jitter_rotvec = jitter_rotvec
        self.jitter_offset = jitter_offset
        self.start = self._orbit_center(START_AZIMUTH_DEG)
        self.start_rotation, _ = look_at(self.start, target)

    def _orbit_center(self, azimuth_deg: float) -> np.ndarray:
        a = np.deg2rad(azimuth_deg)
        r = self.cfg.camera_radius
        return np.array([r * np.cos(a), r * np.sin(a), self.cfg.camera_height])

    def pose(self, frame_id: int) -> Tuple[np.ndarray, np.ndarray]:
        cfg = self.cfg
        seconds = frame_id / cfg.fps
        motion = cfg.camera_motion

        if motion == "static":
            return look_at(self.start, self.target)
        if motion == "orbit":
            azimuth = START_AZIMUTH_DEG + cfg.camera_speed * seconds
            return look_at(self._orbit_center(azimuth), self.target)
        if motion == "pan":
            yaw = Rotation.from_euler(
                "z", cfg.camera_speed * seconds, degrees=True
            ).as_matrix()
            rotation = self.start_rotation @ yaw.T
            return rotation, -rotation @ self.start

        center = self.start + np.array([cfg.camera_speed * seconds, 0, 0])
        rotation = self.start_rotation
        if motion == "handheld":
            shake = Rotation.from_rotvec(
                np.deg2rad(cfg.jitter_deg) * self.jitter_rotvec[frame_id]
            ).as_matrix()
            rotation = shake @ rotation
            center = center + cfg.jitter_m * self.jitter_offset[frame_id]
        return rotation, -rotation @ center


def _object_world_pose(
    cfg: TrajectoryConfig,
    base_center: np.ndarray,
    yaw: float,
    frame_id: int,
) -> Tuple[np.ndarray, np.ndarray]:
    seconds = frame_id / cfg.fps
    rotation = Rotation.from_euler("z", yaw).as_matrix()
    center = base_center.copy()
    if cfg.object_motion == "translate":
        center[0] += cfg.object_speed * seconds
    elif cfg.object_motion == "roll":
        roll = Rotation.from_euler(
            "x", cfg.object_speed * seconds, degrees=True
        ).as_matrix()
        rotation = rotation @ roll
    return rotation, center


def _split_counts(total: int, parts: int) -> List[int]:
    base, extra = divmod(total, parts)
    return [base + (1 if k < extra else 0) for k in range(parts)]


def generate_scene(cfg: TrajectoryConfig) -> Scene:
    """
    Generate a synthetic scene.

    Raises:
        SceneGenerationException: If a box centre is not in front of the
            camera at some frame
    """
    K = intrinsics_from_config(cfg.intrinsics)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_objects

    sizes = rng.uniform(cfg.object_size_min, cfg.object_size_max, (n, 3))
    yaws = rng.uniform(0.0, 2.0 * np.pi, n)
    layouts = [
        rng.uniform(-cfg.plane_extent, cfg.plane_extent, (count, 2))
        for count in _split_counts(cfg.plane_points, n)
    ]
    jitter_rotvec = rng.standard_normal((cfg.n_frames, 3))
    jitter_offset = rng.standard_normal((cfg.n_frames, 3))

    offsets = (np.arange(n) - (n - 1) / 2.0) * cfg.object_spacing
    base_centers = [
        np.array([offsets[k], 0.0, sizes[k, 2] / 2.0]) for k in range(n)
    ]
    target = np.array([0.0, 0.0, float(np.mean(sizes[:, 2])) / 2.0])
    path = _CameraPath(cfg, target, jitter_rotvec, jitter_offset)

    local_points = [
        np.column_stack(
            (layout, np.full(len(layout), -sizes[k, 2] / 2.0))
        )
        for k, layout in enumerate(layouts)
    ]

    frames: List[SceneFrame] = []
    previous_points: Optional[np.ndarray] = None
    for t in range(cfg.n_frames):
        R_cw, t_cw = path.pose(t)
        poses = []
        world_points = []
        for k in range(n):
            R_wo, c_wo = _object_world_pose(cfg, base_centers[k], yaws[k], t)
            t_co = R_cw @ c_wo + t_cw
            if not t_co[2] > 0:
                raise SceneGenerationException(
                    "Object centre is not in front of the camera",
                    frame_id=t,
                    object_index=k,
                )
            poses.append(BoxPose(R_cw @ R_wo, t_co, sizes[k]))
            world_points.append(local_points[k] @ R_wo.T + c_wo)
        camera_points = np.vstack(world_points) @ R_cw.T + t_cw

        if previous_points is None:
            corrs = Correspondences.empty()
        else:
            corrs = _observe(K, cfg, rng, previous_points, camera_points)
        previous_points = camera_points

        frames.append(
            SceneFrame(
                frame_id=t,
                camera_rotation=R_cw,
                camera_translation=t_cw,
                gt_poses=tuple(poses),
                correspondences=corrs,
            )
        )

    logger.info(
        "Generated scene",
        extra={
            "frames": cfg.n_frames,
            "objects": n,
            "camera_motion": cfg.camera_motion,
            "seed": cfg.seed,
        },
    )
    return Scene(K, tuple(frames), cfg)


def _observe(
    K: CameraIntrinsics,
    cfg: TrajectoryConfig,
    rng: np.random.Generator,
    prev_points: np.ndarray,
    curr_points: np.ndarray,
) -> Correspondences:
    """Project points tracked between two frames and corrupt them."""
    m = len(prev_points)
    noise_prev = cfg.corr_noise_sigma * rng.standard_normal((m, 2))
    noise_curr = cfg.corr_noise_sigma * rng.standard_normal((m, 2))
    outlier = rng.random(m) < cfg.outlier_rate
    random_points = rng.uniform(0.0, 1.0, (m, 2)) * [K.width, K.height]

    visible = (prev_points[:, 2] > 0) & (curr_points[:, 2] > 0)
    prev = np.zeros((m, 2))
    curr = np.zeros((m, 2))
    prev[visible] = project_points(K, prev_points[visible])
    curr[visible] = project_points(K, curr_points[visible])
    for image in (prev, curr):
        visible &= (image[:, 0] >= 0) & (image[:, 0] < K.width)
        visible &= (image[:, 1] >= 0) & (image[:, 1] < K.height)

    prev = prev + noise_prev
    curr = np.where(outlier[:, None], random_points, curr + noise_curr)
    return Correspondences(prev[visible], curr[visible])


def schedule_detections(scene: Scene, cfg: StubConfig) -> Scene:
    """
    Run the synthetic detector over a scene.

    A run captured at frame ``c`` is delivered at ``c + cfg.latency``;
    runs delivered after the last frame are discarded.
    """
    n_frames = len(scene.frames)
    events: List[List[Detection]] = [[] for _ in range(n_frames)]
    runs: List[List[int]] = [[] for _ in range(n_frames)]
    for capture in range(0, n_frames, cfg.cadence):
        delivery = capture + cfg.latency
        if delivery >= n_frames:
            break
        runs[delivery].append(capture)
        events[delivery].extend(stub_detect_all(scene, capture, cfg))

    frames = tuple(
        replace(
            frame,
            detection_events=tuple(events[t]),
            detector_runs=tuple(runs[t]),
        )
        for t, frame in enumerate(scene.frames)
    )
    return replace(scene, frames=frames, stub=cfg)


def _plane_projection(K: CameraIntrinsics, pose: BoxPose) -> np.ndarray:
    """Map from base-plane coordinates of a box to homogeneous pixels."""
    R = pose.rotation
    origin = pose.translation - (pose.size[2] / 2.0) * R[:, 2]
    return K.matrix @ np.column_stack((R[:, 0], R[:, 1], origin))


def plane_homography(
    scene: Scene, frame_t: int, object_index: int = 0
) -> Homography:
    """
    Homography induced by an object's base plane from frame ``t - 1``.

    For static objects the base plane is the ground plane.

    Raises:
        DomainException: If ``frame_t`` is not in 1..n_frames-1
    """
    if not 1 <= frame_t < len(scene.frames):
        raise DomainException(f"frame {frame_t} has no predecessor")
    K = scene.intrinsics
    before = scene.frames[frame_t - 1].gt_poses[object_index]
    after = scene.frames[frame_t].gt_poses[object_index]
    P_before = _plane_projection(K, before)
    P_after = _plane_projection(K, after)
    return Homography(P_after @ np.linalg.inv(P_before))


def vertex_transfer_error(
    scene: Scene, frame_t: int, object_index: int = 0
) -> np.ndarray:
    """
    Per-keypoint pixel error of the plane-homography prediction.

    Keypoints on the base plane (indices 1..4) transfer exactly; the
    others measure how far the box leaves the plane approximation.
    """
    K = scene.intrinsics
    H = plane_homography(scene, frame_t, object_index)
    before = project_box(K, scene.frames[frame_t - 1].gt_poses[object_index])
    after = project_box(K, scene.frames[frame_t].gt_poses[object_index])
    predicted = apply_points(H, before.points)
    return np.linalg.norm(predicted - after.points, axis=1)
