"""Pydantic models for run configuration and JSON documents."""

from .config import (
    CameraConfig,
    EvalConfig,
    PipelineConfig,
    RansacConfig,
    RunConfig,
    StubConfig,
    TrajectoryConfig,
)

__all__ = [
    "CameraConfig",
    "EvalConfig",
    "PipelineConfig",
    "RansacConfig",
    "RunConfig",
    "StubConfig",
    "TrajectoryConfig",
]
