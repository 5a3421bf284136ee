"""
Tracking metrics.

Estimated poses are only defined up to a global scale, so every
comparison against metric ground truth either uses scale-free quantities
or first aligns the estimate by the ratio of centre depths.
"""

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import (
    Dict,
    List,
    Mapping,
    NamedTuple,
    Optional,
    Sequence,
    Tuple,
    Union,
)

import numpy as np

from .exceptions import (
    DomainException,
    SchemaException,
    UndefinedMetricException,
)
from .geometry import (
    BoxPose,
    KeypointSet2D,
    iou2d_rect,
    iou3d,
    keypoint_extent,
    project_box,
    rotation_angle,
)
from .logging_config import get_logger
from .sim import Scene

logger = get_logger(__name__)


class PoseError(NamedTuple):
    """Scale-aware decomposition of a pose error.

    Attributes:
        rotation_err: Geodesic rotation distance (rad)
        translation_dir_err: Angle between the translations (rad)
        depth_ratio: Estimated over true centre depth
        size_ratio: Geometric-mean size ratio after depth alignment
    """

    rotation_err: float
    translation_dir_err: float
    depth_ratio: float
    size_ratio: float


class ScoredBox(NamedTuple):
    pose: BoxPose
    score: float
    frame_id: int = 0


class GroundTruthBox(NamedTuple):
    pose: BoxPose
    frame_id: int = 0


class PRPoint(NamedTuple):
    recall: float
    precision: float
    score: float


class TrackRecord(NamedTuple):
    """One tracked box at one frame, as read from a pose stream."""

    frame_id: int
    track_id: int
    keypoints: KeypointSet2D
    pose: BoxPose
    residual: float


def _geometric_mean(values: np.ndarray) -> float:
    return float(np.exp(np.mean(np.log(values))))


def _vector_angle(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b))


def pose_error(est: BoxPose, gt: BoxPose) -> PoseError:
    """Compare an estimated pose with ground truth."""
    depth_ratio = float(est.translation[2] / gt.translation[2])
    size_ratio = _geometric_mean(est.size) / (
        _geometric_mean(gt.size) * depth_ratio
    )
    return PoseError(
        rotation_err=rotation_angle(est.rotation, gt.rotation),
        translation_dir_err=_vector_angle(est.translation, gt.translation),
        depth_ratio=depth_ratio,
        size_ratio=float(size_ratio),
    )


def align_scale(est: BoxPose, gt: BoxPose) -> BoxPose:
    """Scale an estimate about the camera so its centre depth is gt's."""
    return est.scaled(float(gt.translation[2] / est.translation[2]))


def match_detections(
    dets: Sequence[ScoredBox],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float,
) -> Tuple[List[bool], List[float]]:
    """
    Greedily match scored estimates to ground truth.

    Estimates are visited by score descending (stable for ties); each
    takes the unmatched ground truth of its frame with the highest 3D IoU
    after scale alignment, if that IoU reaches ``iou_thresh``.

    Returns:
        True-positive flags and scores, both in visiting order
    """
    order = sorted(range(len(dets)), key=lambda i: -dets[i].score)
    matched = [False] * len(gts)
    flags: List[bool] = []
    scores: List[float] = []
    for i in order:
        det = dets[i]
        best_iou = -1.0
        best_j = -1
        for j, gt in enumerate(gts):
            if matched[j] or gt.frame_id != det.frame_id:
                continue
            iou = iou3d(align_scale(det.pose, gt.pose), gt.pose)
            if iou > best_iou:
                best_iou, best_j = iou, j
        hit = best_j >= 0 and best_iou >= iou_thresh
        if hit:
            matched[best_j] = True
        flags.append(hit)
        scores.append(det.score)
    return flags, scores


def ap_from_matches(
    tp: Sequence[bool], n_gt: int, exact: bool = False
) -> Union[float, Fraction]:
    """
    All-point interpolated average precision of a ranked match list.

    Args:
        tp: True-positive flags in score order
        n_gt: Number of ground-truth boxes
        exact: Compute with rational arithmetic and return a Fraction

    Raises:
        UndefinedMetricException: If there is no ground truth
    """
    if n_gt <= 0:
        raise UndefinedMetricException("average_precision")
    one = Fraction(1) if exact else 1.0
    precisions = []
    recalls = []
    hits = 0
    for k, flag in enumerate(tp, start=1):
        hits += int(flag)
        precisions.append(one * hits / k)
        recalls.append(one * hits / n_gt)

    # Precision envelope: best precision at any deeper rank.
    for k in range(len(precisions) - 2, -1, -1):
        precisions[k] = max(precisions[k], precisions[k + 1])

    ap = one * 0
    previous_recall = one * 0
    for recall, precision in zip(recalls, precisions):
        if recall > previous_recall:
            ap += (recall - previous_recall) * precision
            previous_recall = recall
    return ap if exact else float(ap)


def average_precision(
    dets: Sequence[ScoredBox],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float = 0.5,
) -> float:
    """
    Average precision at a 3D IoU threshold.

    Raises:
        UndefinedMetricException: If ``gts`` is empty
    """
    if not gts:
        raise UndefinedMetricException("average_precision")
    flags, _ = match_detections(dets, gts, iou_thresh)
    return float(ap_from_matches(flags, len(gts)))


def precision_recall_curve(
    dets: Sequence[ScoredBox],
    gts: Sequence[GroundTruthBox],
    iou_thresh: float = 0.5,
) -> List[PRPoint]:
    """Raw precision/recall after each estimate in score order."""
    if not gts:
        raise UndefinedMetricException("precision_recall_curve")
    flags, scores = match_detections(dets, gts, iou_thresh)
    points = []
    hits = 0
    for k, (flag, score) in enumerate(zip(flags, scores), start=1):
        hits += int(flag)
        points.append(PRPoint(hits / len(gts), hits / k, score))
    return points


def jitter(
    estimates: Mapping[int, np.ndarray], truths: Mapping[int, np.ndarray]
) -> float:
    """
    Mean frame-to-frame keypoint displacement error in pixels.

    Both arguments map frame ids to (9, 2) keypoint arrays. Pairs of
    adjacent frames present in both are compared.

    Raises:
        UndefinedMetricException: If no adjacent pair is present in both
    """
    frames = sorted(set(estimates) & set(truths))
    errors = []
    for a, b in zip(frames, frames[1:]):
        if b != a + 1:
            continue
        est_step = np.asarray(estimates[b]) - np.asarray(estimates[a])
        gt_step = np.asarray(truths[b]) - np.asarray(truths[a])
        errors.append(np.linalg.norm(est_step - gt_step, axis=1).mean())
    if not errors:
        raise UndefinedMetricException("jitter")
    return float(np.mean(errors))


@dataclass
class TrackMetrics:
    """Per-track evaluation against its ground-truth object."""

    track_id: int
    object_index: Optional[int]
    errors: List[Tuple[int, PoseError]] = field(default_factory=list)
    jitter: Optional[float] = None


@dataclass
class StreamMetrics:
    tracks: List[TrackMetrics]
    average_precision: Dict[float, float]
    summary: Dict[str, Optional[float]]


def _gt_projections(
    scene: Scene,
) -> Dict[Tuple[int, int], KeypointSet2D]:
    projections = {}
    for frame in scene.frames:
        for k, pose in enumerate(frame.gt_poses):
            try:
                projections[(frame.frame_id, k)] = project_box(
                    scene.intrinsics, pose
                )
            except DomainException:
                continue
    return projections


def _assign_object(
    record: TrackRecord,
    projections: Mapping[Tuple[int, int], KeypointSet2D],
    n_objects: int,
) -> Optional[int]:
    """Ground-truth object whose projected extent best overlaps a record."""
    extent = keypoint_extent(record.keypoints)
    best_iou = 0.0
    best: Optional[int] = None
    for k in range(n_objects):
        projection = projections.get((record.frame_id, k))
        if projection is None:
            continue
        iou = iou2d_rect(extent, keypoint_extent(projection))
        if iou > best_iou:
            best_iou, best = iou, k
    return best


def _mean(values: Sequence[float]) -> Optional[float]:
    return float(np.mean(values)) if len(values) else None


def evaluate_stream(
    records: Sequence[TrackRecord],
    scene: Scene,
    iou_thresholds: Sequence[float] = (0.5,),
) -> StreamMetrics:
    """
    Evaluate a pose stream against a scene's ground truth.

    Each record is attributed to the object with the highest projected
    extent IoU at its frame. Average precision scores records by
    ``1 / (1 + residual)`` against every ground-truth box of the scene.

    Raises:
        SchemaException: If the stream's frames lie outside the scene
    """
    n_frames = len(scene.frames)
    if records and not any(0 <= r.frame_id < n_frames for r in records):
        raise SchemaException(
            "poses", "Pose stream frames do not overlap the scene"
        )
    records = [r for r in records if 0 <= r.frame_id < n_frames]
    projections = _gt_projections(scene)
    n_objects = scene.n_objects

    by_track: Dict[int, List[Tuple[TrackRecord, Optional[int]]]] = {}
    for record in records:
        obj = _assign_object(record, projections, n_objects)
        by_track.setdefault(record.track_id, []).append((record, obj))

    tracks = []
    for track_id in sorted(by_track):
        entries = by_track[track_id]
        labels = Counter(obj for _, obj in entries if obj is not None)
        majority = (
            min(labels, key=lambda k: (-labels[k], k)) if labels else None
        )
        metrics = TrackMetrics(track_id, majority)
        for record, obj in entries:
            if obj is None:
                continue
            gt = scene.frames[record.frame_id].gt_poses[obj]
            metrics.errors.append(
                (record.frame_id, pose_error(record.pose, gt))
            )
        if majority is not None:
            estimates = {
                r.frame_id: r.keypoints.points
                for r, obj in entries
                if obj == majority
            }
            truths = {
                frame_id: projections[(frame_id, majority)].points
                for frame_id in estimates
                if (frame_id, majority) in projections
            }
            try:
                metrics.jitter = jitter(estimates, truths)
            except UndefinedMetricException:
                metrics.jitter = None
        tracks.append(metrics)

    dets = [
        ScoredBox(r.pose, 1.0 / (1.0 + r.residual), r.frame_id)
        for r in records
    ]
    gts = [
        GroundTruthBox(pose, frame.frame_id)
        for frame in scene.frames
        for pose in frame.gt_poses
    ]
    ap = {
        float(t): average_precision(dets, gts, t) for t in iou_thresholds
    }

    errors = [e for t in tracks for _, e in t.errors]
    jitters = [t.jitter for t in tracks if t.jitter is not None]
    summary: Dict[str, Optional[float]] = {
        "records": float(len(records)),
        "tracks": float(len(tracks)),
        "mean_rotation_err": _mean([e.rotation_err for e in errors]),
        "mean_translation_dir_err": _mean(
            [e.translation_dir_err for e in errors]
        ),
        "mean_size_ratio": _mean([e.size_ratio for e in errors]),
        "mean_jitter": _mean(jitters),
    }
    logger.info(
        "Evaluated pose stream",
        extra={"records": len(records), "tracks": len(tracks)},
    )
    return StreamMetrics(tracks, ap, summary)
