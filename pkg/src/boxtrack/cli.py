"""
Command-line driver.

Subcommands:
    simulate  generate a synthetic scene with its detection schedule
    track     run the detection-plus-tracking pipeline over a scene
    eval      score a pose stream against the scene ground truth
    render    draw a stored pose stream as PPM overlays

Exit codes: 0 on success, 2 for usage, configuration or input errors and
3 for runtime failures (``track`` still writes the frames it finished).
"""

import argparse
import json
from typing import Dict, List, Optional, Sequence, Tuple, Type

from pydantic import BaseModel

from .config import get_settings
from .evaluation import evaluate_stream
from .exception_handlers import command_boundary
from .exceptions import DomainException
from .geometry import KeypointSet2D, project_box
from .logging_config import get_logger, setup_logging
from .overlay import write_overlays
from .schemas.config import MAX_SEED, RunConfig
from .schemas.documents import (
    PoseStreamDocument,
    SceneDocument,
    document_to_records,
    document_to_scene,
    metrics_to_document,
    outputs_to_document,
    read_document,
    read_run_config,
    scene_to_document,
    write_document,
)
from .sim import Scene, generate_scene, schedule_detections
from .tracker import FrameOutput, Pipeline

logger = get_logger(__name__)


def describe_defaults(model: Type[BaseModel], prefix: str = "") -> List[str]:
    """List every configuration key with its default and description."""
    lines = []
    for name, info in model.model_fields.items():
        annotation = info.annotation
        if isinstance(annotation, type) and issubclass(annotation, BaseModel):
            lines.extend(describe_defaults(annotation, f"{prefix}{name}."))
            continue
        default = info.get_default(call_default_factory=True)
        description = info.description or ""
        lines.append(
            f"  {prefix}{name} = {json.dumps(default)}  {description}"
        )
    return lines


def _seed(value: str) -> int:
    try:
        seed = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed: {value!r}")
    if not 0 <= seed <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must be in [0, 2**64 - 1]")
    return seed


def _load_config(args: argparse.Namespace) -> RunConfig:
    cfg = read_run_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    return cfg


def _load_scene(path: str) -> Scene:
    return document_to_scene(read_document(SceneDocument, path, "scene"))


@command_boundary("simulate")
def cmd_simulate(args: argparse.Namespace) -> None:
    """Generate a scene, schedule its detections and write it."""
    cfg = _load_config(args)
    scene = generate_scene(cfg.trajectory)
    scene = schedule_detections(scene, cfg.stub)
    write_document(scene_to_document(scene), args.out)


def _track_overlays(
    outputs: Sequence[FrameOutput],
) -> List[Tuple[int, List[Tuple[int, KeypointSet2D]], Tuple]]:
    return [
        (o.frame_id, [(t.id, t.keypoints) for t in o.tracks], ())
        for o in outputs
    ]


@command_boundary("track")
def cmd_track(args: argparse.Namespace) -> None:
    """
    Track a scene and write its pose stream.

    On a runtime failure the frames finished so far are written with
    ``meta.complete`` false before the error propagates.
    """
    cfg = _load_config(args)
    scene = _load_scene(args.scene)
    pipeline = Pipeline(scene.intrinsics, cfg.pipeline)

    outputs: List[FrameOutput] = []
    try:
        for frame in scene.frames:
            outputs.append(pipeline.process_frame(frame))
    except Exception:
        logger.warning(
            "Tracking failed, writing partial output",
            extra={"frames": len(outputs)},
        )
        write_document(
            outputs_to_document(
                outputs, cfg.pipeline, scene.seed, complete=False
            ),
            args.out,
        )
        raise

    write_document(
        outputs_to_document(outputs, cfg.pipeline, scene.seed), args.out
    )
    if args.overlay:
        frames = _track_overlays(outputs)
        write_overlays(args.overlay, scene.intrinsics, frames)


@command_boundary("eval")
def cmd_eval(args: argparse.Namespace) -> None:
    """Evaluate a pose stream and write the metrics document."""
    cfg = _load_config(args)
    scene = _load_scene(args.scene)
    poses = read_document(PoseStreamDocument, args.poses, "poses")
    metrics = evaluate_stream(
        document_to_records(poses), scene, cfg.eval.iou_thresholds
    )
    write_document(metrics_to_document(metrics), args.out)


def _ground_truth(scene: Scene, frame_id: int) -> List[KeypointSet2D]:
    projections = []
    for pose in scene.frames[frame_id].gt_poses:
        try:
            projections.append(project_box(scene.intrinsics, pose))
        except DomainException:
            continue
    return projections


@command_boundary("render")
def cmd_render(args: argparse.Namespace) -> None:
    """Draw a stored pose stream, optionally over the ground truth."""
    scene = _load_scene(args.scene)
    poses = read_document(PoseStreamDocument, args.poses, "poses")

    by_frame: Dict[int, List[Tuple[int, KeypointSet2D]]] = {}
    for record in document_to_records(poses):
        by_frame.setdefault(record.frame_id, []).append(
            (record.track_id, record.keypoints)
        )

    frames = [
        (
            frame.frame_id,
            by_frame.get(frame.frame_id, []),
            _ground_truth(scene, frame.frame_id) if args.with_gt else [],
        )
        for frame in scene.frames
    ]
    write_overlays(args.overlay, scene.intrinsics, frames)


def build_parser() -> argparse.ArgumentParser:
    """Build the argument parser; the help epilog lists all defaults."""
    settings = get_settings()
    epilog = "configuration keys and defaults:\n" + "\n".join(
        describe_defaults(RunConfig)
    )
    formatter = argparse.RawDescriptionHelpFormatter

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--config", help="run configuration JSON (defaults if omitted)"
    )
    common.add_argument(
        "--seed", type=_seed, help="override every generator seed"
    )
    common.add_argument(
        "--verbose", action="store_true", help="enable debug logging"
    )

    parser = argparse.ArgumentParser(
        prog=settings.app_name,
        description="9-DoF box tracking on synthetic scenes",
        epilog=epilog,
        formatter_class=formatter,
    )
    parser.add_argument(
        "--version", action="version", version=settings.app_version
    )
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser(
        "simulate",
        parents=[common],
        help="generate a synthetic scene",
        epilog=epilog,
        formatter_class=formatter,
    )
    simulate.add_argument("--out", required=True, help="scene JSON path")
    simulate.set_defaults(handler=cmd_simulate)

    track = commands.add_parser(
        "track",
        parents=[common],
        help="track a scene",
        epilog=epilog,
        formatter_class=formatter,
    )
    track.add_argument("--scene", required=True, help="scene JSON path")
    track.add_argument("--out", required=True, help="pose stream path")
    track.add_argument("--overlay", help="directory for PPM overlays")
    track.set_defaults(handler=cmd_track)

    evaluate = commands.add_parser(
        "eval",
        parents=[common],
        help="evaluate a pose stream",
        epilog=epilog,
        formatter_class=formatter,
    )
    evaluate.add_argument("--poses", required=True, help="pose stream path")
    evaluate.add_argument("--scene", required=True, help="scene JSON path")
    evaluate.add_argument("--out", required=True, help="metrics JSON path")
    evaluate.set_defaults(handler=cmd_eval)

    render = commands.add_parser(
        "render",
        parents=[common],
        help="draw a pose stream as PPM overlays",
        epilog=epilog,
        formatter_class=formatter,
    )
    render.add_argument("--scene", required=True, help="scene JSON path")
    render.add_argument("--poses", required=True, help="pose stream path")
    render.add_argument(
        "--overlay", required=True, help="directory for PPM overlays"
    )
    render.add_argument(
        "--with-gt",
        action="store_true",
        help="draw the ground truth in grey under the tracks",
    )
    render.set_defaults(handler=cmd_render)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the command line.

    Returns:
        Process exit code (argparse exits with 2 on usage errors)
    """
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    return args.handler(args)
