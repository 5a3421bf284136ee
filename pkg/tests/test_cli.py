"""
Tests for the command-line driver.

Each test runs ``main`` in-process with files under ``tmp_path`` and
checks exit codes, stderr and the written documents.
"""

import json

import pytest
from PIL import Image

from src.boxtrack.cli import build_parser, main
from src.boxtrack.overlay import GT_COLOUR, track_colour
from src.boxtrack.tracker import Pipeline


@pytest.fixture
def config_file(tmp_path):
    """Small run configuration on disk."""
    path = tmp_path / "run.json"
    path.write_text(
        json.dumps(
            {
                "trajectory": {"n_frames": 12, "camera_speed": 2.0},
                "stub": {"cadence": 4},
            }
        )
    )
    return str(path)


@pytest.fixture
def scene_file(tmp_path, config_file):
    """Scene written by the simulate command."""
    path = str(tmp_path / "scene.json")
    argv = ["simulate", "--config", config_file, "--seed", "42"]
    assert main(argv + ["--out", path]) == 0
    return path


@pytest.fixture
def poses_file(tmp_path, config_file, scene_file):
    """Pose stream written by the track command."""
    path = str(tmp_path / "poses.json")
    argv = ["track", "--config", config_file, "--scene", scene_file]
    assert main(argv + ["--out", path]) == 0
    return path


def _load(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


class TestParser:
    """Test argument parsing."""

    def test_help_lists_defaults(self, capsys):
        """Test the help epilog lists configuration defaults."""
        with pytest.raises(SystemExit) as exc_info:
            main(["--help"])

        assert exc_info.value.code == 0
        out = capsys.readouterr().out
        assert "trajectory.n_frames = 100" in out
        assert "pipeline.ransac.min_inliers = 8" in out

    def test_missing_subcommand(self):
        """Test a subcommand is required."""
        with pytest.raises(SystemExit) as exc_info:
            main([])

        assert exc_info.value.code == 2

    @pytest.mark.parametrize("seed", ["-1", "abc", str(2**64)])
    def test_invalid_seed(self, seed, tmp_path):
        """Test out-of-range seeds are usage errors."""
        with pytest.raises(SystemExit) as exc_info:
            main(["simulate", "--seed", seed, "--out", str(tmp_path / "s")])

        assert exc_info.value.code == 2

    def test_common_options(self):
        """Test every subcommand accepts the shared options."""
        parser = build_parser()
        args = parser.parse_args(
            ["eval", "--poses", "p", "--scene", "s", "--out", "m", "--verbose"]
        )

        assert args.verbose is True
        assert args.config is None
        assert args.seed is None


class TestSimulate:
    """Test the simulate command."""

    def test_writes_scene(self, scene_file):
        """Test the scene records the seed and frames."""
        doc = _load(scene_file)

        assert doc["schema"] == "boxtrack9/1"
        assert doc["meta"]["seed"] == 42
        assert len(doc["frames"]) == 12
        assert doc["frames"][0]["detector_runs"] == [0]

    def test_byte_identical_reruns(self, tmp_path, config_file, scene_file):
        """Test the same seed writes the same bytes."""
        again = tmp_path / "again.json"
        main(
            [
                "simulate",
                "--config",
                config_file,
                "--seed",
                "42",
                "--out",
                str(again),
            ]
        )

        assert again.read_bytes() == open(scene_file, "rb").read()

    def test_invalid_config(self, tmp_path, capsys):
        """Test a bad value exits 2 naming the key."""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"trajectory": {"n_frames": 0}}))
        out = tmp_path / "scene.json"

        exit_code = main(
            ["simulate", "--config", str(config), "--out", str(out)]
        )

        assert exit_code == 2
        assert "trajectory.n_frames" in capsys.readouterr().err
        assert not out.exists()

    def test_unknown_config_key(self, tmp_path, capsys):
        """Test an unknown key exits 2."""
        config = tmp_path / "bad.json"
        config.write_text(json.dumps({"stub": {"cadance": 2}}))

        exit_code = main(
            [
                "simulate",
                "--config",
                str(config),
                "--out",
                str(tmp_path / "s.json"),
            ]
        )

        assert exit_code == 2
        assert "stub.cadance" in capsys.readouterr().err

    def test_missing_config(self, tmp_path, capsys):
        """Test a missing configuration file exits 2."""
        exit_code = main(
            [
                "simulate",
                "--config",
                str(tmp_path / "absent.json"),
                "--out",
                str(tmp_path / "s.json"),
            ]
        )

        assert exit_code == 2
        assert "INPUT_NOT_FOUND" in capsys.readouterr().err


class TestTrack:
    """Test the track command."""

    def test_writes_pose_stream(self, poses_file):
        """Test the stream is complete and starts with track 1."""
        doc = _load(poses_file)

        assert doc["meta"]["complete"] is True
        assert doc["meta"]["frames"] == 12
        assert doc["meta"]["seed"] == 42
        assert doc["records"][0]["frame"] == 0
        assert doc["records"][0]["id"] == 1
        assert len(doc["records"][0]["keypoints2d"]) == 9

    def test_missing_scene(self, tmp_path, capsys):
        """Test a missing scene exits 2."""
        exit_code = main(
            [
                "track",
                "--scene",
                str(tmp_path / "absent.json"),
                "--out",
                str(tmp_path / "poses.json"),
            ]
        )

        assert exit_code == 2
        assert "absent.json" in capsys.readouterr().err

    def test_malformed_scene(self, tmp_path):
        """Test a scene that does not match its schema exits 2."""
        scene = tmp_path / "scene.json"
        scene.write_text(json.dumps({"schema": "boxtrack9/1"}))

        exit_code = main(
            [
                "track",
                "--scene",
                str(scene),
                "--out",
                str(tmp_path / "poses.json"),
            ]
        )

        assert exit_code == 2

    def test_overlays(self, tmp_path, config_file, scene_file):
        """Test one viewport-sized PPM per frame."""
        overlay = tmp_path / "overlay"
        exit_code = main(
            [
                "track",
                "--config",
                config_file,
                "--scene",
                scene_file,
                "--out",
                str(tmp_path / "poses.json"),
                "--overlay",
                str(overlay),
            ]
        )

        assert exit_code == 0
        files = sorted(overlay.glob("*.ppm"))
        assert len(files) == 12
        with Image.open(files[0]) as image:
            assert image.size == (640, 480)

    def test_partial_output(self, tmp_path, scene_file, monkeypatch, capsys):
        """Test a runtime failure exits 3 and keeps finished frames."""
        original = Pipeline.process_frame

        def failing(self, frame):
            if frame.frame_id == 5:
                raise RuntimeError("solver diverged")
            return original(self, frame)

        monkeypatch.setattr(Pipeline, "process_frame", failing)
        out = tmp_path / "poses.json"

        exit_code = main(
            ["track", "--scene", scene_file, "--out", str(out)]
        )

        assert exit_code == 3
        assert "unexpected error" in capsys.readouterr().err
        doc = _load(out)
        assert doc["meta"]["complete"] is False
        assert doc["meta"]["frames"] == 5

    def test_deterministic(self, tmp_path, config_file, scene_file):
        """Test tracking the same scene twice gives the same bytes."""
        paths = []
        for name in ("a.json", "b.json"):
            path = tmp_path / name
            main(
                [
                    "track",
                    "--config",
                    config_file,
                    "--scene",
                    scene_file,
                    "--out",
                    str(path),
                ]
            )
            paths.append(path)

        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestEval:
    """Test the eval command."""

    def test_writes_metrics(self, tmp_path, scene_file, poses_file):
        """Test tracking a clean scene scores well."""
        out = tmp_path / "metrics.json"

        exit_code = main(
            [
                "eval",
                "--poses",
                poses_file,
                "--scene",
                scene_file,
                "--out",
                str(out),
            ]
        )

        assert exit_code == 0
        doc = _load(out)
        assert doc["average_precision"][0]["iou_threshold"] == 0.5
        assert doc["average_precision"][0]["ap"] > 0.9
        assert doc["tracks"][0]["id"] == 1
        assert doc["summary"]["mean_rotation_err"] < 0.05

    def test_empty_stream(self, tmp_path, scene_file, poses_file):
        """Test an empty stream scores zero with a null jitter."""
        doc = _load(poses_file)
        doc["records"] = []
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps(doc))
        out = tmp_path / "metrics.json"

        exit_code = main(
            [
                "eval",
                "--poses",
                str(empty),
                "--scene",
                scene_file,
                "--out",
                str(out),
            ]
        )

        assert exit_code == 0
        metrics = _load(out)
        assert metrics["average_precision"][0]["ap"] == 0.0
        assert metrics["summary"]["mean_jitter"] is None

    def test_disjoint_frames(self, tmp_path, scene_file, poses_file, capsys):
        """Test a stream for other frames exits 2."""
        doc = _load(poses_file)
        for record in doc["records"]:
            record["frame"] += 1000
        shifted = tmp_path / "shifted.json"
        shifted.write_text(json.dumps(doc))

        exit_code = main(
            [
                "eval",
                "--poses",
                str(shifted),
                "--scene",
                scene_file,
                "--out",
                str(tmp_path / "metrics.json"),
            ]
        )

        assert exit_code == 2
        assert "SCHEMA_ERROR" in capsys.readouterr().err

    def test_thresholds_from_config(self, tmp_path, scene_file, poses_file):
        """Test AP is reported for every configured threshold."""
        config = tmp_path / "eval.json"
        config.write_text(
            json.dumps({"eval": {"iou_thresholds": [0.25, 0.5, 0.75]}})
        )
        out = tmp_path / "metrics.json"

        main(
            [
                "eval",
                "--config",
                str(config),
                "--poses",
                poses_file,
                "--scene",
                scene_file,
                "--out",
                str(out),
            ]
        )

        thresholds = [
            r["iou_threshold"] for r in _load(out)["average_precision"]
        ]
        assert thresholds == [0.25, 0.5, 0.75]


class TestRender:
    """Test the render command."""

    def test_tracks(self, tmp_path, scene_file, poses_file):
        """Test one overlay per frame with the first track colour."""
        overlay = tmp_path / "render"

        exit_code = main(
            [
                "render",
                "--scene",
                scene_file,
                "--poses",
                poses_file,
                "--overlay",
                str(overlay),
            ]
        )

        assert exit_code == 0
        files = sorted(overlay.glob("frame_*.ppm"))
        assert len(files) == 12
        with Image.open(files[0]) as image:
            assert track_colour(1) in set(image.getdata())

    def test_with_ground_truth(self, tmp_path, scene_file, poses_file):
        """Test ground truth is drawn in grey."""
        doc = _load(poses_file)
        doc["records"] = []
        empty = tmp_path / "empty.json"
        empty.write_text(json.dumps(doc))
        overlay = tmp_path / "render"

        exit_code = main(
            [
                "render",
                "--scene",
                scene_file,
                "--poses",
                str(empty),
                "--overlay",
                str(overlay),
                "--with-gt",
            ]
        )

        assert exit_code == 0
        with Image.open(overlay / "frame_00000.ppm") as image:
            assert GT_COLOUR in set(image.getdata())

    def test_missing_poses(self, tmp_path, scene_file):
        """Test a missing pose stream exits 2."""
        exit_code = main(
            [
                "render",
                "--scene",
                scene_file,
                "--poses",
                str(tmp_path / "absent.json"),
                "--overlay",
                str(tmp_path / "render"),
            ]
        )

        assert exit_code == 2
