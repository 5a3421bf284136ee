"""
Tests for process settings and run configuration schemas.
"""

import pytest
from pydantic import ValidationError

from src.boxtrack.cli import describe_defaults
from src.boxtrack.config import Settings, get_settings
from src.boxtrack.schemas.config import (
    MAX_SEED,
    EvalConfig,
    PipelineConfig,
    RansacConfig,
    RunConfig,
    StubConfig,
    TrajectoryConfig,
)


class TestSettings:
    """Test environment-driven settings."""

    def test_defaults(self, monkeypatch):
        """Test the default values."""
        monkeypatch.delenv("BOXTRACK_LOG", raising=False)
        monkeypatch.delenv("BOXTRACK_DEBUG", raising=False)
        settings = Settings(_env_file=None)

        assert settings.app_name == "boxtrack"
        assert settings.debug is False
        assert settings.log == "INFO"
        assert settings.log_file is None
        assert settings.schema_version == "boxtrack9/1"

    def test_environment_prefix(self, monkeypatch):
        """Test BOXTRACK_ variables override the defaults."""
        monkeypatch.setenv("BOXTRACK_LOG", "debug")
        monkeypatch.setenv("BOXTRACK_DEBUG", "true")

        settings = get_settings()

        assert settings.log == "debug"
        assert settings.debug is True

    def test_cached(self):
        """Test settings are read once."""
        assert get_settings() is get_settings()


class TestSections:
    """Test the configuration sections."""

    def test_defaults(self):
        """Test the documented default values."""
        ransac = RansacConfig()
        assert (ransac.inlier_threshold, ransac.max_iterations) == (2.0, 500)
        assert ransac.min_inliers == 8
        assert StubConfig().cadence == 5
        pipeline = PipelineConfig()
        assert pipeline.consolidation_iou == 0.5
        assert pipeline.max_missed == 3
        assert EvalConfig().iou_thresholds == [0.5]
        assert TrajectoryConfig().camera_motion == "orbit"

    @pytest.mark.parametrize(
        "section,values",
        [
            (RansacConfig, {"min_inliers": 3}),
            (RansacConfig, {"confidence": 1.0}),
            (StubConfig, {"cadence": 0}),
            (StubConfig, {"dropout": 1.0}),
            (PipelineConfig, {"consolidation_iou": 1.0}),
            (PipelineConfig, {"blend_weight": 1.5}),
            (TrajectoryConfig, {"n_frames": 1}),
            (TrajectoryConfig, {"camera_motion": "dolly"}),
            (TrajectoryConfig, {"seed": MAX_SEED + 1}),
            (EvalConfig, {"iou_thresholds": [0.0]}),
            (EvalConfig, {"iou_thresholds": []}),
        ],
    )
    def test_invalid_values(self, section, values):
        """Test out-of-range values are rejected."""
        with pytest.raises(ValidationError):
            section(**values)

    def test_unknown_key_rejected(self):
        """Test a misspelled key is an error, not ignored."""
        with pytest.raises(ValidationError) as exc_info:
            StubConfig(cadance=3)

        assert exc_info.value.errors()[0]["loc"] == ("cadance",)

    def test_inverted_size_range(self):
        """Test the size range must not be inverted."""
        with pytest.raises(ValidationError):
            TrajectoryConfig(object_size_min=0.6, object_size_max=0.3)

    def test_sections_are_frozen(self):
        """Test configurations are immutable."""
        with pytest.raises(ValidationError):
            StubConfig().cadence = 2


class TestRunConfig:
    """Test the complete configuration document."""

    def test_nested_document(self):
        """Test a partial nested document keeps other defaults."""
        cfg = RunConfig.model_validate(
            {"trajectory": {"n_frames": 10}, "pipeline": {"ransac": {}}}
        )

        assert cfg.trajectory.n_frames == 10
        assert cfg.trajectory.n_objects == 1
        assert cfg.pipeline.ransac == RansacConfig()

    def test_with_seed(self):
        """Test the seed override reaches every generator."""
        cfg = RunConfig().with_seed(42)

        assert cfg.trajectory.seed == 42
        assert cfg.stub.seed == 42
        assert cfg.pipeline.ransac.seed == 42
        assert RunConfig().trajectory.seed == 0

    def test_with_seed_keeps_other_fields(self):
        """Test the override changes nothing else."""
        cfg = RunConfig.model_validate({"stub": {"cadence": 7}})

        assert cfg.with_seed(1).stub.cadence == 7


class TestDescribeDefaults:
    """Test the defaults listing used in the help text."""

    def test_lists_nested_keys(self):
        """Test nested sections are flattened to dotted keys."""
        lines = describe_defaults(RunConfig)
        keys = [line.split()[0] for line in lines]

        assert "trajectory.n_frames" in keys
        assert "pipeline.ransac.inlier_threshold" in keys
        assert "eval.iou_thresholds" in keys
        assert "trajectory.intrinsics.fx" in keys

    def test_shows_default_and_description(self):
        """Test each line carries its default and description."""
        lines = describe_defaults(StubConfig)

        assert lines[1].startswith("  cadence = 5")
        assert "Frames between detector runs" in lines[1]
