"""
Tests for the JSON document schemas and their conversions.
"""

import json

import numpy as np
import pytest

from src.boxtrack.evaluation import evaluate_stream
from src.boxtrack.exceptions import (
    ConfigurationException,
    InputNotFoundException,
    SchemaException,
)
from src.boxtrack.schemas.config import (
    PipelineConfig,
    RunConfig,
    StubConfig,
)
from src.boxtrack.schemas.documents import (
    MetricsDocument,
    PoseStreamDocument,
    SceneDocument,
    document_to_records,
    document_to_scene,
    metrics_to_document,
    outputs_to_document,
    parse_document,
    read_document,
    read_run_config,
    scene_to_document,
    serialize,
    write_document,
)
from src.boxtrack.tracker import run_pipeline


@pytest.fixture
def tracked(orbit_scene, pipeline_config):
    """Pipeline outputs for the orbit scene."""
    return run_pipeline(orbit_scene, pipeline_config)


@pytest.fixture
def scene_payload(orbit_scene):
    """Scene document as plain JSON data."""
    return json.loads(serialize(scene_to_document(orbit_scene)))


class TestSceneDocument:
    """Test scene serialization."""

    def test_round_trip_is_exact(self, orbit_scene):
        """Test parsing a written scene reproduces every value."""
        text = serialize(scene_to_document(orbit_scene))
        scene = document_to_scene(parse_document(SceneDocument, text, "scene"))

        assert scene.seed == orbit_scene.seed
        assert scene.stub == orbit_scene.stub
        assert scene.intrinsics == orbit_scene.intrinsics
        for a, b in zip(scene.frames, orbit_scene.frames):
            assert a.gt_poses == b.gt_poses
            np.testing.assert_array_equal(
                a.correspondences.curr, b.correspondences.curr
            )
            assert a.detection_events == b.detection_events
            assert a.detector_runs == b.detector_runs

    def test_written_text_is_stable(self, orbit_scene):
        """Test serialize(parse(text)) == text."""
        text = serialize(scene_to_document(orbit_scene))
        again = serialize(parse_document(SceneDocument, text, "scene"))

        assert again == text

    def test_schema_tag(self, scene_payload):
        """Test the document carries its schema version."""
        assert scene_payload["schema"] == "boxtrack9/1"

    def test_wrong_schema_version(self, scene_payload):
        """Test a document from another schema is rejected."""
        scene_payload["schema"] = "boxtrack9/0"

        with pytest.raises(SchemaException) as exc_info:
            parse_document(
                SceneDocument, json.dumps(scene_payload), "scene"
            )

        assert "schema" in exc_info.value.details["field_errors"]
        assert exc_info.value.details["document"] == "scene"

    def test_frames_must_be_contiguous(self, scene_payload):
        """Test a gap in frame ids is rejected."""
        scene_payload["frames"][1]["frame"] = 5

        with pytest.raises(SchemaException):
            parse_document(
                SceneDocument, json.dumps(scene_payload), "scene"
            )

    def test_unknown_field(self, scene_payload):
        """Test extra keys are rejected with their path."""
        scene_payload["frames"][0]["colour"] = "red"

        with pytest.raises(SchemaException) as exc_info:
            parse_document(
                SceneDocument, json.dumps(scene_payload), "scene"
            )

        assert "frames.0.colour" in exc_info.value.details["field_errors"]

    def test_invalid_json(self):
        """Test text that is not JSON is a schema error."""
        with pytest.raises(SchemaException):
            parse_document(SceneDocument, "{not json", "scene")


class TestPoseStreamDocument:
    """Test pose stream serialization."""

    def test_records_round_trip(self, orbit_scene, tracked):
        """Test records read back equal the pipeline outputs."""
        doc = outputs_to_document(tracked, PipelineConfig(), 7)
        parsed = parse_document(PoseStreamDocument, serialize(doc), "poses")
        records = document_to_records(parsed)

        assert parsed.meta.frames == len(orbit_scene.frames)
        assert parsed.meta.complete is True
        expected = [(o, t) for o in tracked for t in o.tracks]
        assert len(records) == len(expected)
        for record, (output, track) in zip(records, expected):
            assert record.frame_id == output.frame_id
            assert record.track_id == track.id
            assert record.keypoints == track.keypoints
            assert record.pose == track.pose

    def test_partial_flag(self, tracked):
        """Test partial output is marked incomplete."""
        doc = outputs_to_document(
            tracked[:3], PipelineConfig(), 7, complete=False
        )

        assert doc.meta.complete is False
        assert doc.meta.frames == 3

    def test_rejects_track_id_zero(self, tracked):
        """Test track ids start at 1."""
        payload = json.loads(
            serialize(outputs_to_document(tracked, PipelineConfig(), 7))
        )
        payload["records"][0]["id"] = 0

        with pytest.raises(SchemaException):
            parse_document(PoseStreamDocument, json.dumps(payload), "poses")


class TestMetricsDocument:
    """Test metrics serialization."""

    def test_metrics_round_trip(self, orbit_scene, tracked):
        """Test a metrics document parses back."""
        doc = outputs_to_document(tracked, PipelineConfig(), 7)
        metrics = evaluate_stream(document_to_records(doc), orbit_scene)
        text = serialize(metrics_to_document(metrics))
        parsed = parse_document(MetricsDocument, text, "metrics")

        assert parsed.average_precision[0].iou_threshold == 0.5
        assert parsed.average_precision[0].ap == (
            metrics.average_precision[0.5]
        )
        assert parsed.summary == metrics.summary

    def test_null_jitter_written_as_null(self, orbit_scene):
        """Test an undefined jitter is written as JSON null."""
        metrics = evaluate_stream([], orbit_scene)
        payload = json.loads(serialize(metrics_to_document(metrics)))

        assert payload["summary"]["mean_jitter"] is None
        assert payload["average_precision"] == [
            {"iou_threshold": 0.5, "ap": 0.0}
        ]


class TestFiles:
    """Test reading and writing files."""

    def test_write_then_read(self, tmp_path, orbit_scene):
        """Test a written scene file reads back."""
        path = tmp_path / "nested" / "scene.json"
        write_document(scene_to_document(orbit_scene), str(path))

        doc = read_document(SceneDocument, str(path), "scene")

        assert doc.meta.seed == orbit_scene.seed
        assert path.read_text().endswith("\n")

    def test_missing_file(self, tmp_path):
        """Test a missing file is reported with its path."""
        path = str(tmp_path / "absent.json")

        with pytest.raises(InputNotFoundException) as exc_info:
            read_document(SceneDocument, path, "scene")

        assert exc_info.value.details["path"] == path

    def test_malformed_file(self, tmp_path):
        """Test a file that is not JSON is a schema error."""
        path = tmp_path / "scene.json"
        path.write_text("[1, 2")

        with pytest.raises(SchemaException):
            read_document(SceneDocument, str(path), "scene")


class TestReadRunConfig:
    """Test loading run configurations."""

    def test_defaults_without_path(self):
        """Test no path gives the default configuration."""
        assert read_run_config(None) == RunConfig()

    def test_reads_file(self, tmp_path):
        """Test a partial file overrides only its keys."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"stub": {"cadence": 3}}))

        cfg = read_run_config(str(path))

        assert cfg.stub == StubConfig(cadence=3)
        assert cfg.trajectory == RunConfig().trajectory

    def test_invalid_value(self, tmp_path):
        """Test a bad value names its dotted key."""
        path = tmp_path / "run.json"
        path.write_text(json.dumps({"trajectory": {"n_frames": 0}}))

        with pytest.raises(ConfigurationException) as exc_info:
            read_run_config(str(path))

        assert "trajectory.n_frames" in exc_info.value.message
        assert exc_info.value.exit_code == 2

    def test_not_json(self, tmp_path):
        """Test a malformed file is a configuration error."""
        path = tmp_path / "run.json"
        path.write_text("trajectory: {}")

        with pytest.raises(ConfigurationException):
            read_run_config(str(path))

    def test_missing(self, tmp_path):
        """Test a missing file is an input error."""
        with pytest.raises(InputNotFoundException):
            read_run_config(str(tmp_path / "run.json"))
