"""
Pydantic schemas for the JSON documents read and written by the CLI.

Every document carries a ``schema`` version tag. Matrices are stored as
row-major lists and floats are written with Python's shortest round-trip
representation, so parsing a written document reproduces the values
bit for bit.
"""

import json
from pathlib import Path
from typing import Annotated, Dict, List, Optional, Type, TypeVar

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
)

from ..config import get_settings
from ..detector import Detection
from ..evaluation import StreamMetrics, TrackRecord
from ..exception_handlers import (
    configuration_error,
    validation_field_errors,
)
from ..exceptions import (
    ConfigurationException,
    InputNotFoundException,
    SchemaException,
)
from ..geometry import BoxPose, KeypointSet2D
from ..homography import Correspondences
from ..sim import Scene, SceneFrame, intrinsics_from_config
from ..tracker import FrameOutput
from .config import (
    CameraConfig,
    PipelineConfig,
    RunConfig,
    StubConfig,
    TrajectoryConfig,
)

Vec3 = Annotated[List[float], Field(min_length=3, max_length=3)]
Mat3 = Annotated[List[float], Field(min_length=9, max_length=9)]
Point2 = Annotated[List[float], Field(min_length=2, max_length=2)]
Keypoints2D = Annotated[List[Point2], Field(min_length=9, max_length=9)]


def _schema_version() -> str:
    return get_settings().schema_version


class _Document(BaseModel):
    """Base for versioned documents."""

    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    schema_: str = Field(
        default_factory=_schema_version,
        alias="schema",
        description="Document schema version",
    )

    @field_validator("schema_")
    @classmethod
    def validate_schema(cls, v: str) -> str:
        """Validate the document was written for this schema version."""
        expected = _schema_version()
        if v != expected:
            raise ValueError(f"expected schema {expected!r}, got {v!r}")
        return v


class _Record(BaseModel):
    model_config = ConfigDict(extra="forbid")


class PoseFields(_Record):
    rotation: Mat3 = Field(..., description="Row-major 3x3 rotation")
    translation: Vec3
    size: Vec3

    @classmethod
    def from_pose(cls, pose: BoxPose) -> "PoseFields":
        return cls(
            rotation=pose.rotation.ravel().tolist(),
            translation=pose.translation.tolist(),
            size=pose.size.tolist(),
        )

    def to_pose(self) -> BoxPose:
        return BoxPose(
            np.array(self.rotation).reshape(3, 3),
            np.array(self.translation),
            np.array(self.size),
        )


class CorrespondenceRecord(_Record):
    prev: List[Point2] = Field(default_factory=list)
    curr: List[Point2] = Field(default_factory=list)


class DetectionRecord(_Record):
    frame: int = Field(..., ge=0, description="Capture frame")
    keypoints2d: Keypoints2D
    score: float = Field(..., ge=0, le=1)
    object_index: Optional[int] = Field(None, ge=0)


class FrameRecord(_Record):
    frame: int = Field(..., ge=0)
    camera_rotation: Mat3
    camera_translation: Vec3
    objects: List[PoseFields]
    correspondences: CorrespondenceRecord
    detections: List[DetectionRecord] = Field(default_factory=list)
    detector_runs: List[int] = Field(default_factory=list)


class SceneMeta(_Record):
    seed: int = Field(..., ge=0)
    trajectory: TrajectoryConfig
    stub: Optional[StubConfig] = None


class SceneDocument(_Document):
    """A generated scene with its detection schedule."""

    meta: SceneMeta
    intrinsics: CameraConfig
    frames: List[FrameRecord] = Field(..., min_length=2)

    @field_validator("frames")
    @classmethod
    def validate_contiguous(cls, v: List[FrameRecord]) -> List[FrameRecord]:
        """Validate frame ids run contiguously from 0."""
        for index, frame in enumerate(v):
            if frame.frame != index:
                raise ValueError("frame ids must be contiguous from 0")
        return v


class PoseRecord(_Record):
    frame: int = Field(..., ge=0)
    id: int = Field(..., ge=1)
    keypoints2d: Keypoints2D
    rotation: Mat3
    translation: Vec3
    size: Vec3
    residual: float = Field(..., ge=0)


class LostRecord(_Record):
    frame: int = Field(..., ge=0)
    id: int = Field(..., ge=1)


class PoseStreamMeta(_Record):
    seed: int = Field(..., ge=0, description="Seed of the tracked scene")
    pipeline: PipelineConfig
    frames: int = Field(..., ge=0, description="Frames processed")
    complete: bool = Field(True, description="False for partial output")


class PoseStreamDocument(_Document):
    """Per-frame poses of every live track."""

    meta: PoseStreamMeta
    records: List[PoseRecord] = Field(default_factory=list)
    lost: List[LostRecord] = Field(default_factory=list)


class PoseErrorRecord(_Record):
    frame: int
    rotation_err: float
    translation_dir_err: float
    depth_ratio: float
    size_ratio: float


class TrackMetricsRecord(_Record):
    id: int
    object_index: Optional[int]
    jitter: Optional[float] = Field(
        None, description="Null when fewer than two adjacent frames"
    )
    errors: List[PoseErrorRecord] = Field(default_factory=list)


class APRecord(_Record):
    iou_threshold: float
    ap: float


class MetricsDocument(_Document):
    """Evaluation of a pose stream against its scene."""

    average_precision: List[APRecord]
    tracks: List[TrackMetricsRecord] = Field(default_factory=list)
    summary: Dict[str, Optional[float]] = Field(default_factory=dict)


# Conversions between documents and library values


def scene_to_document(scene: Scene) -> SceneDocument:
    frames = []
    for frame in scene.frames:
        frames.append(
            FrameRecord(
                frame=frame.frame_id,
                camera_rotation=frame.camera_rotation.ravel().tolist(),
                camera_translation=frame.camera_translation.tolist(),
                objects=[PoseFields.from_pose(p) for p in frame.gt_poses],
                correspondences=CorrespondenceRecord(
                    prev=frame.correspondences.prev.tolist(),
                    curr=frame.correspondences.curr.tolist(),
                ),
                detections=[
                    DetectionRecord(
                        frame=d.frame_id,
                        keypoints2d=d.keypoints.points.tolist(),
                        score=d.score,
                        object_index=d.object_index,
                    )
                    for d in frame.detection_events
                ],
                detector_runs=list(frame.detector_runs),
            )
        )
    return SceneDocument(
        meta=SceneMeta(
            seed=scene.seed, trajectory=scene.config, stub=scene.stub
        ),
        intrinsics=scene.config.intrinsics,
        frames=frames,
    )


def document_to_scene(doc: SceneDocument) -> Scene:
    frames = []
    for record in doc.frames:
        corrs = record.correspondences
        frames.append(
            SceneFrame(
                frame_id=record.frame,
                camera_rotation=np.array(record.camera_rotation).reshape(
                    3, 3
                ),
                camera_translation=np.array(record.camera_translation),
                gt_poses=tuple(p.to_pose() for p in record.objects),
                correspondences=Correspondences(
                    np.array(corrs.prev).reshape(-1, 2),
                    np.array(corrs.curr).reshape(-1, 2),
                ),
                detection_events=tuple(
                    Detection(
                        KeypointSet2D(np.array(d.keypoints2d)),
                        d.score,
                        d.frame,
                        d.object_index,
                    )
                    for d in record.detections
                ),
                detector_runs=tuple(record.detector_runs),
            )
        )
    trajectory = doc.meta.trajectory.model_copy(
        update={"intrinsics": doc.intrinsics, "seed": doc.meta.seed}
    )
    return Scene(
        intrinsics_from_config(doc.intrinsics),
        tuple(frames),
        trajectory,
        doc.meta.stub,
    )


def outputs_to_document(
    outputs: List[FrameOutput],
    pipeline: PipelineConfig,
    seed: int,
    complete: bool = True,
) -> PoseStreamDocument:
    records = [
        PoseRecord(
            frame=output.frame_id,
            id=track.id,
            keypoints2d=track.keypoints.points.tolist(),
            residual=track.residual,
            **PoseFields.from_pose(track.pose).model_dump(),
        )
        for output in outputs
        for track in output.tracks
    ]
    lost = [
        LostRecord(frame=output.frame_id, id=track_id)
        for output in outputs
        for track_id in output.lost
    ]
    return PoseStreamDocument(
        meta=PoseStreamMeta(
            seed=seed,
            pipeline=pipeline,
            frames=len(outputs),
            complete=complete,
        ),
        records=records,
        lost=lost,
    )


def document_to_records(doc: PoseStreamDocument) -> List[TrackRecord]:
    return [
        TrackRecord(
            frame_id=r.frame,
            track_id=r.id,
            keypoints=KeypointSet2D(np.array(r.keypoints2d)),
            pose=PoseFields(
                rotation=r.rotation, translation=r.translation, size=r.size
            ).to_pose(),
            residual=r.residual,
        )
        for r in doc.records
    ]


def metrics_to_document(metrics: StreamMetrics) -> MetricsDocument:
    return MetricsDocument(
        average_precision=[
            APRecord(iou_threshold=threshold, ap=ap)
            for threshold, ap in metrics.average_precision.items()
        ],
        tracks=[
            TrackMetricsRecord(
                id=track.track_id,
                object_index=track.object_index,
                jitter=track.jitter,
                errors=[
                    PoseErrorRecord(frame=frame, **error._asdict())
                    for frame, error in track.errors
                ],
            )
            for track in metrics.tracks
        ],
        summary=metrics.summary,
    )


# Reading and writing

DocumentT = TypeVar("DocumentT", bound=_Document)


def serialize(doc: BaseModel) -> str:
    """Serialize a document as JSON with shortest round-trip floats."""
    payload = doc.model_dump(mode="json", by_alias=True)
    return json.dumps(payload, indent=1, allow_nan=False) + "\n"


def write_document(doc: BaseModel, path: str) -> None:
    target = Path(path)
    if target.parent and not target.parent.exists():
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(serialize(doc), encoding="utf-8")


def _read_json(path: str, kind: str) -> object:
    source = Path(path)
    if not source.is_file():
        raise InputNotFoundException(path)
    try:
        return json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaException(
            kind, f"{path} is not valid JSON: {e.msg}"
        ) from e


def parse_document(
    cls: Type[DocumentT], text: str, kind: str
) -> DocumentT:
    """
    Parse a document from JSON text.

    Raises:
        SchemaException: If the text is not JSON or does not match
    """
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise SchemaException(kind, f"invalid JSON: {e.msg}") from e
    return _validate(cls, payload, kind)


def _validate(cls: Type[DocumentT], payload: object, kind: str) -> DocumentT:
    try:
        return cls.model_validate(payload)
    except ValidationError as e:
        field_errors = validation_field_errors(e)
        raise SchemaException(
            kind,
            f"{kind} document does not match schema "
            f"({', '.join(sorted(field_errors))})",
            details={"field_errors": field_errors},
        ) from e


def read_document(cls: Type[DocumentT], path: str, kind: str) -> DocumentT:
    """
    Read a document from a file.

    Raises:
        InputNotFoundException: If the file does not exist
        SchemaException: If the file does not match the schema
    """
    return _validate(cls, _read_json(path, kind), kind)


def read_run_config(path: Optional[str]) -> RunConfig:
    """
    Read a run configuration, or the defaults when ``path`` is None.

    Raises:
        InputNotFoundException: If the file does not exist
        ConfigurationException: If a key is unknown or a value invalid
    """
    if path is None:
        return RunConfig()
    source = Path(path)
    if not source.is_file():
        raise InputNotFoundException(path)
    try:
        payload = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigurationException(
            f"{path} is not valid JSON: {e.msg}"
        ) from e
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise configuration_error(e) from e
