"""
Detection-plus-tracking pipeline.

Tracks are propagated every frame by the homography of the points around
them and re-lifted to 3D; detections arriving every few frames (possibly
late) are forwarded to the current frame and consolidated with the live
tracks by 2D overlap.
"""

from collections import deque
from dataclasses import dataclass, replace
from typing import (
    Deque,
    Dict,
    Iterable,
    List,
    NamedTuple,
    Optional,
    Sequence,
    Set,
    Tuple,
)

import numpy as np

from .detector import Detection
from .epnp import LiftResult, lift, rescale_to_canonical
from .exceptions import (
    AmbiguousLiftException,
    DegenerateInputException,
    DomainException,
    EstimationException,
    TrackingLostException,
)
from .geometry import (
    BoxPose,
    CameraIntrinsics,
    KeypointSet2D,
    edge_lengths,
    fit_pose_from_vertices,
    iou2d_rect,
    keypoint_extent,
)
from .homography import (
    Correspondences,
    CorrespondenceInput,
    Homography,
    apply_points,
    as_correspondences,
    compose,
    estimate_ransac,
    invert,
)
from .logging_config import get_logger, log_pipeline_event
from .schemas.config import PipelineConfig
from .sim import Scene, SceneFrame

logger = get_logger(__name__)

# Failures that end a track or reject a detection rather than a run.
TRACKING_ERRORS = (
    TrackingLostException,
    AmbiguousLiftException,
    DomainException,
    EstimationException,
    DegenerateInputException,
)


@dataclass(frozen=True, eq=False)
class TrackState:
    """State of one tracked box.

    Attributes:
        id: Track identifier, unique within a run
        keypoints: Current 2D keypoints
        pose: Current pose in the track's scale gauge
        canonical_size: Size fixed at creation, largest component 1
        chain: Homography from frame ``chain_origin`` to the current frame
        chain_origin: Frame of the last accepted detection or creation
        frame_chains: Chain from ``chain_origin`` to each recent frame,
            oldest first
        last_detection_frame: Capture frame of the last accepted detection
        missed_detections: Detector runs in a row that missed the track
        last_residual: Reprojection RMS of the last lift (px)
        alive: False once tracking failed
        trimmed_chains: Chains dropped from the front of ``frame_chains``
    """

    id: int
    keypoints: KeypointSet2D
    pose: BoxPose
    canonical_size: np.ndarray
    chain: Homography
    chain_origin: int
    frame_chains: Tuple[Homography, ...]
    last_detection_frame: int
    missed_detections: int = 0
    last_residual: float = 0.0
    alive: bool = True
    trimmed_chains: int = 0

    @property
    def chain_frame(self) -> int:
        """Frame the current chain maps to."""
        start = self.chain_origin + self.trimmed_chains
        return start + len(self.frame_chains) - 1

    def chain_at(self, frame_id: int) -> Optional[Homography]:
        """Chain from the origin to ``frame_id``, None outside the span."""
        offset = frame_id - self.chain_origin - self.trimmed_chains
        if 0 <= offset < len(self.frame_chains):
            return self.frame_chains[offset]
        return None


class TrackOutput(NamedTuple):
    id: int
    keypoints: KeypointSet2D
    pose: BoxPose
    residual: float


class FrameOutput(NamedTuple):
    """Live tracks after a frame and the ids lost during it."""

    frame_id: int
    tracks: List[TrackOutput]
    lost: List[int]


class Consolidation(NamedTuple):
    """Outcome of offering one detection to the live tracks.

    ``outcome`` is ``matched``, ``created`` or ``discarded``.
    """

    tracks: List[TrackState]
    outcome: str
    track_id: Optional[int]


def _fit(
    result: LiftResult, canonical_size: np.ndarray
) -> Tuple[BoxPose, float]:
    vertices = rescale_to_canonical(result.vertices, canonical_size)
    return fit_pose_from_vertices(vertices).pose, result.reprojection_rms


def init_track(
    d: Detection,
    K: CameraIntrinsics,
    track_id: int,
    frame_id: Optional[int] = None,
) -> TrackState:
    """
    Start a track from a detection.

    The lifted box is scaled so that its largest size component is 1,
    which fixes the track's canonical size.

    Args:
        d: Detection whose keypoints are valid at ``frame_id``
        K: Camera intrinsics
        track_id: Identifier of the new track
        frame_id: Frame the keypoints refer to (capture frame by default)

    Raises:
        AmbiguousLiftException: If the keypoints do not determine a box
    """
    result = lift(K, d.keypoints)
    sizes = edge_lengths(result.vertices)
    canonical = sizes / sizes.max()
    canonical.setflags(write=False)
    pose = fit_pose_from_vertices(
        result.vertices.scaled(1.0 / sizes.max())
    ).pose
    origin = d.frame_id if frame_id is None else frame_id
    identity = Homography.identity()
    return TrackState(
        id=track_id,
        keypoints=d.keypoints,
        pose=pose,
        canonical_size=canonical,
        chain=identity,
        chain_origin=origin,
        frame_chains=(identity,),
        last_detection_frame=d.frame_id,
        last_residual=result.reprojection_rms,
    )


def gate_correspondences(
    kp: KeypointSet2D, corrs: Correspondences, margin: float
) -> Correspondences:
    """Keep correspondences whose prev point is near the keypoints."""
    region = keypoint_extent(kp).expanded(margin)
    prev = corrs.prev
    inside = (
        (prev[:, 0] >= region.x0)
        & (prev[:, 0] <= region.x1)
        & (prev[:, 1] >= region.y0)
        & (prev[:, 1] <= region.y1)
    )
    return corrs.subset(inside)


def _propagate(
    kp: KeypointSet2D, corrs: CorrespondenceInput, cfg: PipelineConfig
) -> Tuple[KeypointSet2D, Homography]:
    gated = gate_correspondences(
        kp, as_correspondences(corrs), cfg.region_margin
    )
    H, _ = estimate_ransac(gated, cfg.ransac)
    return KeypointSet2D(apply_points(H, kp.points)), H


def chain_capacity(cfg: PipelineConfig) -> int:
    """Per-frame chains a track keeps for forwarding late detections."""
    return max(cfg.history_frames, 1) + 1


def track_step(
    s: TrackState,
    corrs: CorrespondenceInput,
    K: CameraIntrinsics,
    cfg: PipelineConfig,
) -> TrackState:
    """
    Advance a track by one frame.

    Returns:
        The propagated state, or the input state marked dead when the
        homography or the lift fails
    """
    if not s.alive:
        return s
    try:
        keypoints, H = _propagate(s.keypoints, corrs, cfg)
        pose, residual = _fit(lift(K, keypoints), s.canonical_size)
    except TRACKING_ERRORS as e:
        logger.debug(
            "Track %d lost: %s",
            s.id,
            e,
            extra={"track_id": s.id, "error_type": type(e).__name__},
        )
        return replace(s, alive=False)

    chain = compose(H, s.chain)
    frame_chains = s.frame_chains + (chain,)
    excess = max(len(frame_chains) - chain_capacity(cfg), 0)
    return replace(
        s,
        keypoints=keypoints,
        pose=pose,
        chain=chain,
        frame_chains=frame_chains[excess:],
        trimmed_chains=s.trimmed_chains + excess,
        last_residual=residual,
    )


def forward_keypoints(
    kp: KeypointSet2D,
    history: Iterable[CorrespondenceInput],
    cfg: PipelineConfig,
) -> KeypointSet2D:
    """
    Carry keypoints forward through buffered frame correspondences.

    Raises:
        TrackingLostException: If a frame has too few supporting points
        DomainException: If a keypoint maps to infinity
    """
    for corrs in history:
        kp, _ = _propagate(kp, corrs, cfg)
    return kp


def _blend(
    forwarded: np.ndarray, tracked: np.ndarray, weight: float
) -> KeypointSet2D:
    if weight == 1.0:
        return KeypointSet2D(forwarded)
    return KeypointSet2D(weight * forwarded + (1.0 - weight) * tracked)


def _overlaps(a: KeypointSet2D, b: KeypointSet2D) -> bool:
    return iou2d_rect(keypoint_extent(a), keypoint_extent(b)) > 0.0


def consolidate(
    tracks: Sequence[TrackState],
    d: Detection,
    current_frame: int,
    K: CameraIntrinsics,
    cfg: PipelineConfig,
    next_id: int,
    history: Sequence[Tuple[int, Correspondences]] = (),
) -> Consolidation:
    """
    Merge one detection into the live tracks.

    The detection is forwarded to ``current_frame`` through each
    candidate track's chain segment since its capture frame and matched
    to the track with the largest 2D extent IoU. A matched track takes
    the blended keypoints, is re-lifted at its canonical size and has its
    chain reset. An unmatched detection starts a new track after being
    forwarded through ``history`` (``(frame_id, correspondences)`` pairs),
    unless it overlaps a track whose chain starts after the capture frame.

    Raises:
        DomainException: If the detection was captured after
            ``current_frame``
    """
    if d.frame_id > current_frame:
        raise DomainException(
            f"detection from frame {d.frame_id} delivered at {current_frame}"
        )

    best: Optional[Tuple[float, int, np.ndarray]] = None
    stale: List[TrackState] = []
    for index, track in enumerate(tracks):
        at_capture = track.chain_at(d.frame_id)
        if at_capture is None:
            stale.append(track)
            continue
        if d.frame_id == track.chain_frame:
            forwarded = d.keypoints.points
        else:
            segment = compose(track.chain, invert(at_capture))
            try:
                forwarded = apply_points(segment, d.keypoints.points)
            except DomainException:
                continue
        iou = iou2d_rect(
            keypoint_extent(KeypointSet2D(forwarded)),
            keypoint_extent(track.keypoints),
        )
        if best is None or iou > best[0]:
            best = (iou, index, forwarded)

    if best is not None and best[0] >= cfg.consolidation_iou:
        iou, index, forwarded = best
        return _merge(tracks, index, d, forwarded, current_frame, K, cfg)

    for track in stale:
        if _overlaps(d.keypoints, track.keypoints):
            _discard(d, current_frame, "stale", track_id=track.id)
            return Consolidation(list(tracks), "discarded", None)

    return _create(tracks, d, current_frame, K, cfg, next_id, history)


def _merge(
    tracks: Sequence[TrackState],
    index: int,
    d: Detection,
    forwarded: np.ndarray,
    current_frame: int,
    K: CameraIntrinsics,
    cfg: PipelineConfig,
) -> Consolidation:
    track = tracks[index]
    keypoints = _blend(forwarded, track.keypoints.points, cfg.blend_weight)
    try:
        pose, residual = _fit(lift(K, keypoints), track.canonical_size)
    except TRACKING_ERRORS as e:
        _discard(d, current_frame, type(e).__name__, track_id=track.id)
        return Consolidation(list(tracks), "discarded", None)

    identity = Homography.identity()
    updated = replace(
        track,
        keypoints=keypoints,
        pose=pose,
        chain=identity,
        chain_origin=current_frame,
        frame_chains=(identity,),
        trimmed_chains=0,
        last_detection_frame=d.frame_id,
        missed_detections=0,
        last_residual=residual,
    )
    result = list(tracks)
    result[index] = updated
    log_pipeline_event(
        "detection_consolidated",
        {"track_id": track.id, "capture_frame": d.frame_id},
        frame_id=current_frame,
    )
    return Consolidation(result, "matched", track.id)


def _create(
    tracks: Sequence[TrackState],
    d: Detection,
    current_frame: int,
    K: CameraIntrinsics,
    cfg: PipelineConfig,
    next_id: int,
    history: Sequence[Tuple[int, Correspondences]],
) -> Consolidation:
    frames = [
        corrs
        for frame_id, corrs in history
        if d.frame_id < frame_id <= current_frame
    ]
    if len(frames) < current_frame - d.frame_id:
        _discard(d, current_frame, "history exhausted")
        return Consolidation(list(tracks), "discarded", None)

    try:
        keypoints = forward_keypoints(d.keypoints, frames, cfg)
        forwarded = replace(d, keypoints=keypoints)
        track = init_track(forwarded, K, next_id, current_frame)
    except TRACKING_ERRORS as e:
        _discard(d, current_frame, type(e).__name__)
        return Consolidation(list(tracks), "discarded", None)

    log_pipeline_event(
        "track_created",
        {"track_id": track.id, "capture_frame": d.frame_id},
        frame_id=current_frame,
    )
    return Consolidation(list(tracks) + [track], "created", track.id)


def _discard(
    d: Detection,
    current_frame: int,
    reason: str,
    track_id: Optional[int] = None,
) -> None:
    details: Dict[str, object] = {
        "capture_frame": d.frame_id,
        "reason": reason,
    }
    if track_id is not None:
        details["track_id"] = track_id
    log_pipeline_event("detection_discarded", details, frame_id=current_frame)


def drop_missed(
    tracks: Sequence[TrackState],
    matched: Set[int],
    capture_frame: int,
    cfg: PipelineConfig,
) -> Tuple[List[TrackState], List[int]]:
    """
    Account one detector run against the live tracks.

    Tracks established by the run's capture frame and not matched by it
    gain a miss; tracks with more than ``cfg.max_missed`` misses are
    dropped.

    Returns:
        Remaining tracks and the ids of the dropped ones
    """
    kept: List[TrackState] = []
    dropped: List[int] = []
    for track in tracks:
        if track.id not in matched and track.chain_origin <= capture_frame:
            track = replace(
                track, missed_detections=track.missed_detections + 1
            )
        if track.missed_detections > cfg.max_missed:
            dropped.append(track.id)
        else:
            kept.append(track)
    return kept, dropped


class Pipeline:
    """
    Frame-by-frame detection-plus-tracking state machine.

    Frames must be processed in order. Within a frame, live tracks are
    stepped first, then the detector runs delivered at the frame are
    consolidated in ascending capture-frame order.
    """

    def __init__(self, K: CameraIntrinsics, cfg: PipelineConfig):
        self.K = K
        self.cfg = cfg
        self.tracks: List[TrackState] = []
        self.next_id = 1
        self.history: Deque[Tuple[int, Correspondences]] = deque(
            maxlen=max(cfg.history_frames, 1)
        )

    def process_frame(self, frame: SceneFrame) -> FrameOutput:
        """Advance the pipeline by one scene frame."""
        frame_id = frame.frame_id
        self.history.append((frame_id, frame.correspondences))
        lost: List[int] = []

        stepped: List[TrackState] = []
        for track in self.tracks:
            track = track_step(track, frame.correspondences, self.K, self.cfg)
            if track.alive:
                stepped.append(track)
            else:
                lost.append(track.id)
                log_pipeline_event(
                    "track_lost",
                    {"track_id": track.id, "reason": "tracking"},
                    frame_id=frame_id,
                )
        self.tracks = stepped

        for capture, detections in self._runs(frame):
            matched: Set[int] = set()
            for detection in detections:
                result = consolidate(
                    self.tracks,
                    detection,
                    frame_id,
                    self.K,
                    self.cfg,
                    self.next_id,
                    list(self.history),
                )
                self.tracks = result.tracks
                if result.outcome == "created":
                    self.next_id += 1
                if result.track_id is not None:
                    matched.add(result.track_id)
            self.tracks, dropped = drop_missed(
                self.tracks, matched, capture, self.cfg
            )
            for track_id in dropped:
                log_pipeline_event(
                    "track_lost",
                    {"track_id": track_id, "reason": "missed detections"},
                    frame_id=frame_id,
                )
            lost.extend(dropped)

        return FrameOutput(
            frame_id,
            [
                TrackOutput(t.id, t.keypoints, t.pose, t.last_residual)
                for t in sorted(self.tracks, key=lambda t: t.id)
            ],
            lost,
        )

    @staticmethod
    def _runs(frame: SceneFrame) -> List[Tuple[int, List[Detection]]]:
        captures = set(frame.detector_runs)
        captures.update(d.frame_id for d in frame.detection_events)
        return [
            (
                capture,
                [d for d in frame.detection_events if d.frame_id == capture],
            )
            for capture in sorted(captures)
        ]


def run_pipeline(
    scene: Scene,
    cfg: PipelineConfig,
    K: Optional[CameraIntrinsics] = None,
) -> List[FrameOutput]:
    """Run the pipeline over every frame of a scene."""
    pipeline = Pipeline(K or scene.intrinsics, cfg)
    outputs = [pipeline.process_frame(frame) for frame in scene.frames]
    logger.info(
        "Pipeline finished",
        extra={
            "frames": len(outputs),
            "tracks_created": pipeline.next_id - 1,
        },
    )
    return outputs
