"""
Pytest configuration and shared fixtures for the test suite.

This module puts the project root on the import path and provides the
reference camera, seeded poses, configurations and small synthetic
scenes shared by the module tests.
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

# Add the project root to Python path to enable imports from src
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

# noqa: E402 - imports below must come after sys.path modification
from src.boxtrack.config import get_settings  # noqa: E402
from src.boxtrack.geometry import (  # noqa: E402
    BoxPose,
    CameraIntrinsics,
    box_vertices,
)
from src.boxtrack.schemas.config import (  # noqa: E402
    PipelineConfig,
    StubConfig,
    TrajectoryConfig,
)
from src.boxtrack.sim import generate_scene, schedule_detections  # noqa


@pytest.fixture(autouse=True)
def clear_settings_cache():
    """Re-read settings from the environment in every test."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def K():
    """Reference 640x480 camera."""
    return CameraIntrinsics(
        fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480
    )


@pytest.fixture
def small_K():
    """100x100 camera with unit-friendly numbers."""
    return CameraIntrinsics(
        fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=100, height=100
    )


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(1234)


@pytest.fixture
def pose():
    """A tilted box three units in front of the camera."""
    rotation = Rotation.from_euler("xyz", [20, -35, 10], degrees=True)
    return BoxPose(
        rotation.as_matrix(),
        np.array([0.1, -0.05, 3.0]),
        np.array([0.5, 0.3, 0.4]),
    )


@pytest.fixture
def random_pose():
    """Factory drawing random poses with every vertex well in front."""

    def draw(
        rng: np.random.Generator,
        depth=(2.0, 4.0),
        size=(0.3, 0.8),
        min_vertex_depth: float = 0.2,
    ) -> BoxPose:
        while True:
            z = rng.uniform(*depth)
            xy = rng.uniform(-0.3, 0.3, 2) * z
            candidate = BoxPose(
                Rotation.random(None, rng).as_matrix(),
                np.array([xy[0], xy[1], z]),
                rng.uniform(*size, 3),
            )
            depths = box_vertices(candidate).points[:, 2]
            if depths.min() >= min_vertex_depth:
                return candidate

    return draw


@pytest.fixture
def orbit_config():
    """Short noise-free orbit around one box."""
    return TrajectoryConfig(n_frames=20, camera_speed=2.0, seed=7)


@pytest.fixture
def orbit_scene(orbit_config):
    """Orbit scene with a detector run every five frames."""
    return schedule_detections(
        generate_scene(orbit_config), StubConfig(cadence=5)
    )


@pytest.fixture
def pipeline_config():
    """Default pipeline policy."""
    return PipelineConfig()
