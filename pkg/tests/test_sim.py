"""
Tests for the synthetic scene generator.
"""

import numpy as np
import pytest

from src.boxtrack.exceptions import DomainException, SceneGenerationException
from src.boxtrack.homography import (
    Homography,
    apply_points,
    estimate_dlt,
    symmetric_transfer_error,
)
from src.boxtrack.schemas.config import StubConfig, TrajectoryConfig
from src.boxtrack.sim import (
    generate_scene,
    look_at,
    plane_homography,
    schedule_detections,
    vertex_transfer_error,
)


def _frobenius_distance(A, B):
    return float(np.linalg.norm(A.matrix - B.matrix))


def _assert_scenes_identical(a, b):
    assert len(a.frames) == len(b.frames)
    for fa, fb in zip(a.frames, b.frames):
        assert fa.frame_id == fb.frame_id
        np.testing.assert_array_equal(fa.camera_rotation, fb.camera_rotation)
        np.testing.assert_array_equal(
            fa.correspondences.prev, fb.correspondences.prev
        )
        np.testing.assert_array_equal(
            fa.correspondences.curr, fb.correspondences.curr
        )
        assert fa.gt_poses == fb.gt_poses
        assert fa.detection_events == fb.detection_events


class TestLookAt:
    """Test the level camera construction."""

    def test_target_on_optical_axis(self):
        """Test the target lands on the camera z axis."""
        center = np.array([1.0, -2.0, 1.5])
        target = np.array([0.0, 0.0, 0.2])
        R, t = look_at(center, target)
        in_camera = R @ target + t
        assert in_camera[2] > 0
        np.testing.assert_allclose(in_camera[:2], 0.0, atol=1e-12)
        np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
        assert np.linalg.det(R) == pytest.approx(1.0)

    def test_image_y_points_down(self):
        """Test world up maps to negative image y."""
        R, _ = look_at(np.array([0.0, -3.0, 1.0]), np.zeros(3))
        assert (R @ np.array([0.0, 0.0, 1.0]))[1] < 0

    def test_vertical_view_rejected(self):
        """Test a camera looking straight down cannot be levelled."""
        with pytest.raises(SceneGenerationException):
            look_at(np.array([0.0, 0.0, 2.0]), np.zeros(3))


class TestGenerateScene:
    """Test scene generation."""

    def test_structure(self, orbit_config):
        """Test frame ids, object count and correspondence layout."""
        scene = generate_scene(orbit_config)
        assert [f.frame_id for f in scene.frames] == list(range(20))
        assert scene.n_objects == 1
        assert scene.seed == 7
        assert len(scene.frames[0].correspondences) == 0
        for frame in scene.frames[1:]:
            assert 0 < len(frame.correspondences) <= 200
        for frame in scene.frames:
            assert all(p.translation[2] > 0 for p in frame.gt_poses)

    def test_deterministic(self, orbit_config):
        """Test the same configuration replays bitwise."""
        cfg = orbit_config.model_copy(
            update={"corr_noise_sigma": 1.0, "outlier_rate": 0.2}
        )
        _assert_scenes_identical(generate_scene(cfg), generate_scene(cfg))

    def test_seed_changes_scene(self, orbit_config):
        """Test different seeds give different boxes."""
        a = generate_scene(orbit_config)
        b = generate_scene(orbit_config.model_copy(update={"seed": 8}))
        assert a.frames[0].gt_poses[0] != b.frames[0].gt_poses[0]

    def test_static_scene_has_fixed_points(self):
        """Test a static camera and box give curr == prev exactly."""
        scene = generate_scene(
            TrajectoryConfig(n_frames=5, camera_motion="static")
        )
        for frame in scene.frames[1:]:
            np.testing.assert_array_equal(
                frame.correspondences.prev, frame.correspondences.curr
            )

    def test_translation_is_plane_induced(self):
        """Test exact correspondences follow one homography per frame."""
        scene = generate_scene(
            TrajectoryConfig(
                n_frames=6, camera_motion="translate", camera_speed=0.3
            )
        )
        for t in range(1, 6):
            corrs = scene.frames[t].correspondences
            H = estimate_dlt(corrs)
            assert symmetric_transfer_error(H, corrs).max() < 1e-9
            assert _frobenius_distance(H, plane_homography(scene, t)) < 1e-9

    def test_handheld_is_plane_induced(self):
        """Test camera shake keeps the correspondences planar."""
        scene = generate_scene(
            TrajectoryConfig(
                n_frames=6,
                camera_motion="handheld",
                camera_speed=0.1,
                jitter_deg=0.5,
                jitter_m=0.01,
                seed=3,
            )
        )
        for t in range(1, 6):
            corrs = scene.frames[t].correspondences
            H = estimate_dlt(corrs)
            assert _frobenius_distance(H, plane_homography(scene, t)) < 1e-9

    def test_outlier_fraction(self):
        """Test roughly the configured share of points are replaced."""
        scene = generate_scene(
            TrajectoryConfig(
                n_frames=4, camera_speed=2.0, outlier_rate=0.3, seed=5
            )
        )
        replaced = []
        for t in range(1, 4):
            corrs = scene.frames[t].correspondences
            errors = symmetric_transfer_error(
                plane_homography(scene, t), corrs
            )
            replaced.append(np.mean(errors > 1e-6))
        assert 0.15 < np.mean(replaced) < 0.45

    def test_noise_level(self):
        """Test correspondence noise has the configured magnitude."""
        scene = generate_scene(
            TrajectoryConfig(
                n_frames=3, camera_speed=2.0, corr_noise_sigma=1.0
            )
        )
        corrs = scene.frames[1].correspondences
        predicted = apply_points(plane_homography(scene, 1), corrs.prev)
        # Noise in both views, so about sqrt(2) per coordinate.
        assert 0.8 < (corrs.curr - predicted).std() < 2.0

    def test_multiple_objects_are_separated(self):
        """Test boxes are spread along the ground plane."""
        scene = generate_scene(
            TrajectoryConfig(n_frames=2, n_objects=2, object_spacing=1.2)
        )
        a, b = scene.frames[0].gt_poses
        assert np.linalg.norm(a.translation - b.translation) > 1.0

    def test_object_behind_camera(self):
        """Test a pan that turns away from the box fails generation."""
        cfg = TrajectoryConfig(
            n_frames=30, camera_motion="pan", camera_speed=360.0
        )
        with pytest.raises(SceneGenerationException) as exc_info:
            generate_scene(cfg)
        assert exc_info.value.details["object_index"] == 0
        assert 0 < exc_info.value.details["frame_id"] < 30


class TestPlaneHomography:
    """Test the analytic ground-truth homography."""

    def test_static_camera_is_identity(self):
        """Test no motion gives the identity."""
        scene = generate_scene(
            TrajectoryConfig(n_frames=3, camera_motion="static")
        )
        assert _frobenius_distance(
            plane_homography(scene, 1), Homography.identity()
        ) < 1e-12

    def test_pure_rotation(self):
        """Test a panning camera gives K R K^-1."""
        scene = generate_scene(
            TrajectoryConfig(n_frames=4, camera_motion="pan", camera_speed=3)
        )
        K = scene.intrinsics.matrix
        for t in range(1, 4):
            R = (
                scene.frames[t].camera_rotation
                @ scene.frames[t - 1].camera_rotation.T
            )
            expected = Homography(K @ R @ np.linalg.inv(K))
            assert _frobenius_distance(
                plane_homography(scene, t), expected
            ) < 1e-9

    def test_base_vertices_transfer_exactly(self, orbit_config):
        """Test the four base vertices follow the plane homography."""
        scene = generate_scene(orbit_config)
        for t in range(1, len(scene.frames)):
            errors = vertex_transfer_error(scene, t)
            assert errors[1:5].max() < 1e-9
            assert errors[5:].max() > 0.0

    def test_first_frame_has_no_predecessor(self, orbit_config):
        """Test frame 0 is rejected."""
        with pytest.raises(DomainException):
            plane_homography(generate_scene(orbit_config), 0)


class TestScheduleDetections:
    """Test detection delivery."""

    def test_latency_shifts_delivery(self, orbit_config):
        """Test runs arrive latency frames after capture."""
        scene = schedule_detections(
            generate_scene(orbit_config), StubConfig(cadence=5, latency=2)
        )
        delivered = {
            f.frame_id: f.detector_runs
            for f in scene.frames
            if f.detector_runs
        }
        assert delivered == {2: (0,), 7: (5,), 12: (10,), 17: (15,)}
        for frame in scene.frames:
            for d in frame.detection_events:
                assert d.frame_id == frame.frame_id - 2

    def test_late_runs_are_discarded(self, orbit_config):
        """Test runs delivered after the last frame are dropped."""
        scene = schedule_detections(
            generate_scene(orbit_config), StubConfig(cadence=5, latency=6)
        )
        captures = [c for f in scene.frames for c in f.detector_runs]
        assert captures == [0, 5, 10]

    def test_dropped_runs_are_recorded(self, orbit_config):
        """Test a run with no detection still appears as a run."""
        scene = schedule_detections(
            generate_scene(orbit_config),
            StubConfig(cadence=1, dropout=0.5, seed=2),
        )
        runs = sum(len(f.detector_runs) for f in scene.frames)
        events = sum(len(f.detection_events) for f in scene.frames)
        assert runs == 20
        assert events < runs

    def test_records_stub_config(self, orbit_scene):
        """Test the scene remembers the detector configuration."""
        assert orbit_scene.stub == StubConfig(cadence=5)
