"""Command-line entry point.

Subcommands: track-camera, track-object, render, eval, synth, serve.
Exit codes: 0 success, 1 validation/usage error, 2 pipeline failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .depth import save_depth_sequence
from .errors import ChartBlenderError, UnsupportedVersion, ValidationError
from .geometry import CameraTrajectory, load_poses_csv
from .metrics import DEFAULT_APD3D_THRESHOLDS, apd3d, trajectory_errors
from .project import (
    atomic_write_bytes,
    load_project,
    render_cache_key,
    resolve_render_inputs,
    run_camera_tracking,
    run_object_tracking,
    save_project,
    write_frames,
)
from .compositing import render_project_frames
from .synth import CameraPathSpec, orbit_scene, plane_scene, synth_scene

USAGE_ERROR = 1
PIPELINE_ERROR = 2


def _diag(exc: BaseException) -> None:
    print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)


def _cmd_track_camera(args) -> int:
    project = load_project(args.project)
    base = Path(args.project).parent
    if args.seed is not None:
        project.odometry.seed = args.seed
    run_camera_tracking(project, base, force=args.force, threads=max(args.threads, 1))
    save_project(project, args.project)
    print(project.camera_cache.path)
    return 0


def _cmd_track_object(args) -> int:
    project = load_project(args.project)
    base = Path(args.project).parent
    anchor_ids = [args.anchor] if args.anchor else [
        aid for aid, a in project.anchors.items() if a.mode == "object"
    ]
    if not anchor_ids:
        raise ValidationError("anchors", "no object-mode anchors to track")
    for aid in anchor_ids:
        run_object_tracking(project, base, aid, force=args.force)
        print(project.object_caches[aid].path)
    save_project(project, args.project)
    return 0


def _cmd_render(args) -> int:
    project = load_project(args.project)
    base = Path(args.project).parent
    inputs = resolve_render_inputs(project, base)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = {"render_key": render_cache_key(project), "frames": {}}
    from PIL import Image
    import io

    for composed in render_project_frames(inputs):
        buf = io.BytesIO()
        Image.fromarray(composed.raster).save(buf, format="PNG")
        atomic_write_bytes(out_dir / f"out_{composed.frame_index:06d}.png", buf.getvalue())
        if composed.warnings:
            report["frames"][str(composed.frame_index)] = composed.warnings
    atomic_write_bytes(
        out_dir / "render_report.json",
        (json.dumps(report, sort_keys=True, indent=2) + "\n").encode(),
    )
    print(str(out_dir))
    return 0


def _load_track3d_csv(path):
    """`frame,x,y,z,visible` rows for metric evaluation of 3D tracks."""
    points = []
    visible = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["frame", "x", "y", "z", "visible"]:
            raise ValidationError("tracks", f"bad 3D track CSV header in {path}")
        for row in reader:
            points.append([float(row[1]), float(row[2]), float(row[3])])
            visible.append(bool(int(row[4])))
    return np.asarray(points), np.asarray(visible, dtype=bool)


def _cmd_eval(args) -> int:
    report = {
        "rotation_mean": None,
        "rotation_median": None,
        "translation_mean": None,
        "translation_median": None,
        "apd3d": None,
    }
    if args.gt_poses or args.pred_poses:
        if not (args.gt_poses and args.pred_poses):
            raise ValidationError("poses", "both --gt-poses and --pred-poses are required")
        gt = CameraTrajectory.load_csv(args.gt_poses)
        pred = CameraTrajectory.load_csv(args.pred_poses)
        errors = trajectory_errors(gt, pred)
        rotations = [e.rotation_deg for e in errors]
        translations = [e.translation_m for e in errors]
        report["rotation_mean"] = float(np.mean(rotations))
        report["rotation_median"] = float(np.median(rotations))
        report["translation_mean"] = float(np.mean(translations))
        report["translation_median"] = float(np.median(translations))
    if args.gt_tracks or args.pred_tracks:
        if not args.gt_tracks or not args.pred_tracks or len(args.gt_tracks) != len(args.pred_tracks):
            raise ValidationError("tracks", "--gt-tracks and --pred-tracks must pair up")
        gt_pts, gt_vis, pred_pts = [], [], []
        for g_path, p_path in zip(args.gt_tracks, args.pred_tracks):
            g, vis = _load_track3d_csv(g_path)
            p, _ = _load_track3d_csv(p_path)
            gt_pts.append(g)
            gt_vis.append(vis)
            pred_pts.append(p)
        report["apd3d"] = apd3d(pred_pts, gt_pts, gt_vis, DEFAULT_APD3D_THRESHOLDS).score
    print(json.dumps(report, sort_keys=True, indent=2))
    return 0


def _cmd_synth(args) -> int:
    if args.scene == "orbit":
        spec = orbit_scene(width=args.width, height=args.height, frames=args.frames)
    elif args.scene == "translate":
        spec = plane_scene(
            width=args.width, height=args.height, frames=args.frames,
            camera=CameraPathSpec(kind="translate", delta=(0.05, 0.0, 0.0)),
        )
    else:
        spec = plane_scene(width=args.width, height=args.height, frames=args.frames)
    result = synth_scene(spec, seed=args.seed)
    out = Path(args.out)
    write_frames(out / "frames", result.frames)
    save_depth_sequence(out / "depth", result.depths)
    result.trajectory.save_csv(out / "gt_poses.csv")
    result.intrinsics.save(out / "intrinsics.json")
    for i, track in enumerate(result.tracks):
        track.save_csv(out / f"gt_track_{i}.csv")
    print(str(out))
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    data_root = args.data_root or os.environ.get("CHARTBLENDER_DATA_ROOT", ".")
    app = create_app(Path(data_root))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chartblender",
        description="Embed motion-synchronized data charts into video frames.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track-camera", help="solve and cache the camera trajectory")
    p.add_argument("--project", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--force", action="store_true", help="ignore the cache")
    p.set_defaults(func=_cmd_track_camera)

    p = sub.add_parser("track-object", help="solve and cache object poses for an anchor")
    p.add_argument("--project", required=True)
    p.add_argument("--anchor", default=None, help="anchor id (default: every object anchor)")
    p.add_argument("--force", action="store_true")
    p.set_defaults(func=_cmd_track_object)

    p = sub.add_parser("render", help="composite every frame to an output directory")
    p.add_argument("--project", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("eval", help="pose and 3D-track metrics as JSON on stdout")
    p.add_argument("--gt-poses")
    p.add_argument("--pred-poses")
    p.add_argument("--gt-tracks", nargs="*", default=None)
    p.add_argument("--pred-tracks", nargs="*", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic scene with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--scene", choices=["static", "translate", "orbit"], default="orbit")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("serve", help="run the authoring HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8787)
    p.add_argument("--data-root", default=None)
    p.set_defaults(func=_cmd_serve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (ValidationError, UnsupportedVersion) as exc:
        _diag(exc)
        return USAGE_ERROR
    except ChartBlenderError as exc:
        _diag(exc)
        return PIPELINE_ERROR
    except OSError as exc:
        _diag(exc)
        return PIPELINE_ERROR


if __name__ == "__main__":
    sys.exit(main())
