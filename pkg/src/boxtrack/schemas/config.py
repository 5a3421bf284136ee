"""
Pydantic schemas for run configuration.

Every section rejects unknown keys and carries its invariants as field
constraints, so a malformed configuration fails at load time with the
offending key in the error location.
"""

from typing import List, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    ValidationInfo,
    field_validator,
)

MAX_SEED = 2**64 - 1


class _Section(BaseModel):
    """Base for configuration sections."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class CameraConfig(_Section):
    """Pinhole intrinsics and viewport of the simulated camera."""

    fx: float = Field(500.0, gt=0, description="Focal length x (px)")
    fy: float = Field(500.0, gt=0, description="Focal length y (px)")
    cx: float = Field(320.0, description="Principal point x (px)")
    cy: float = Field(240.0, description="Principal point y (px)")
    width: int = Field(640, gt=0, description="Viewport width (px)")
    height: int = Field(480, gt=0, description="Viewport height (px)")


class RansacConfig(_Section):
    """Robust homography estimation parameters."""

    inlier_threshold: float = Field(
        2.0, gt=0, description="Symmetric transfer error threshold (px)"
    )
    max_iterations: int = Field(
        500, ge=1, description="Number of minimal-sample hypotheses"
    )
    min_inliers: int = Field(
        8, ge=4, description="Inliers required to accept a model"
    )
    seed: int = Field(
        0, ge=0, le=MAX_SEED, description="Sampling generator seed"
    )
    adaptive: bool = Field(
        False, description="Stop early once the confidence is reached"
    )
    confidence: float = Field(
        0.99, gt=0, lt=1, description="Target confidence (adaptive only)"
    )


class StubConfig(_Section):
    """Synthetic detector schedule and noise model."""

    noise_sigma: float = Field(
        0.0, ge=0, description="Keypoint noise standard deviation (px)"
    )
    cadence: int = Field(
        5, ge=1, description="Frames between detector runs"
    )
    latency: int = Field(
        0, ge=0, description="Frames between capture and delivery"
    )
    dropout: float = Field(
        0.0, ge=0, lt=1, description="Probability of a missed detection"
    )
    seed: int = Field(
        0, ge=0, le=MAX_SEED, description="Noise generator seed"
    )


class PipelineConfig(_Section):
    """Detection-plus-tracking policy."""

    consolidation_iou: float = Field(
        0.5, gt=0, lt=1, description="2D IoU needed to match a track"
    )
    max_missed: int = Field(
        3, ge=0, description="Unmatched detector runs before a drop"
    )
    region_margin: float = Field(
        0.25, ge=0, description="Gate expansion as a fraction of extent"
    )
    blend_weight: float = Field(
        1.0, ge=0, le=1, description="Detection weight at consolidation"
    )
    history_frames: int = Field(
        8, ge=0, description="Frames of correspondences kept for replay"
    )
    ransac: RansacConfig = Field(default_factory=RansacConfig)


class TrajectoryConfig(_Section):
    """Synthetic scene generator parameters."""

    n_frames: int = Field(100, ge=2, description="Number of frames")
    n_objects: int = Field(1, ge=1, description="Number of boxes")
    fps: float = Field(30.0, gt=0, description="Frames per second")
    camera_motion: Literal[
        "static", "orbit", "translate", "pan", "handheld"
    ] = Field("orbit", description="Camera path family")
    camera_speed: float = Field(
        5.0,
        description="deg/s for orbit and pan, m/s for translate/handheld",
    )
    camera_radius: float = Field(
        2.5, gt=0, description="Horizontal camera distance (m)"
    )
    camera_height: float = Field(
        1.5, gt=0, description="Camera height above the ground (m)"
    )
    jitter_deg: float = Field(
        0.05, ge=0, description="Handheld rotation jitter (deg)"
    )
    jitter_m: float = Field(
        0.001, ge=0, description="Handheld position jitter (m)"
    )
    object_motion: Literal["static", "translate", "roll"] = Field(
        "static", description="Object motion family"
    )
    object_speed: float = Field(
        0.0, description="m/s for translate, deg/s for roll"
    )
    object_size_min: float = Field(
        0.3, gt=0, description="Smallest box edge (m)"
    )
    object_size_max: float = Field(
        0.6, gt=0, description="Largest box edge (m)"
    )
    object_spacing: float = Field(
        1.0, gt=0, description="Distance between box centres (m)"
    )
    plane_points: int = Field(
        200, ge=4, description="Tracked plane points per frame"
    )
    plane_extent: float = Field(
        0.6, gt=0, description="Half-width of each point patch (m)"
    )
    corr_noise_sigma: float = Field(
        0.0, ge=0, description="Correspondence noise (px)"
    )
    outlier_rate: float = Field(
        0.0, ge=0, lt=1, description="Fraction of outlier correspondences"
    )
    seed: int = Field(0, ge=0, le=MAX_SEED, description="Scene seed")
    intrinsics: CameraConfig = Field(default_factory=CameraConfig)

    @field_validator("object_size_max")
    @classmethod
    def validate_size_range(
        cls, v: float, info: ValidationInfo
    ) -> float:
        """Validate the box size range is not inverted."""
        low = info.data.get("object_size_min")
        if low is not None and v < low:
            raise ValueError(
                "object_size_max must not be below object_size_min"
            )
        return v


class EvalConfig(_Section):
    """Metric parameters."""

    iou_thresholds: List[float] = Field(
        default_factory=lambda: [0.5],
        min_length=1,
        description="3D IoU thresholds for average precision",
    )

    @field_validator("iou_thresholds")
    @classmethod
    def validate_thresholds(cls, v: List[float]) -> List[float]:
        """Validate every threshold lies in (0, 1]."""
        for value in v:
            if not 0 < value <= 1:
                raise ValueError("IoU thresholds must lie in (0, 1]")
        return v


class RunConfig(_Section):
    """Complete configuration document read by the CLI."""

    trajectory: TrajectoryConfig = Field(default_factory=TrajectoryConfig)
    stub: StubConfig = Field(default_factory=StubConfig)
    pipeline: PipelineConfig = Field(default_factory=PipelineConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    def with_seed(self, seed: int) -> "RunConfig":
        """Return a copy whose generator seeds are all ``seed``."""
        pipeline = self.pipeline.model_copy(
            update={
                "ransac": self.pipeline.ransac.model_copy(
                    update={"seed": seed}
                )
            }
        )
        return self.model_copy(
            update={
                "trajectory": self.trajectory.model_copy(
                    update={"seed": seed}
                ),
                "stub": self.stub.model_copy(update={"seed": seed}),
                "pipeline": pipeline,
            }
        )
