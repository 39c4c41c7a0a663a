from pathlib import Path

import numpy as np
import pytest

from chartblender.camera_tracking import AnchorSpec, OdometryConfig
from chartblender.charts import ChartSpec
from chartblender.compositing import Placement, TimelineSegment
from chartblender.depth import save_depth_sequence
from chartblender.project import ChartRef, Project, VideoRef, save_project, write_frames
from chartblender.synth import CameraPathSpec, plane_scene, synth_scene

DATASET = "year,count\n2019,10\n2020,20\n2021,40\n"


def build_demo_project(
    root: Path,
    frames: int = 4,
    width: int = 160,
    height: int = 120,
    camera_kind: str = "static",
    with_object_anchor: bool = False,
    seed: int = 21,
):
    """Materialize a small synthetic project on disk and return (project, path)."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    camera = (
        CameraPathSpec(kind="translate", delta=(0.02, 0.0, 0.0))
        if camera_kind == "translate"
        else CameraPathSpec(kind="static")
    )
    scene = plane_scene(width=width, height=height, frames=frames, plane_z=2.0, camera=camera)
    result = synth_scene(scene, seed=seed)
    write_frames(root / "frames", result.frames)
    save_depth_sequence(root / "depth", result.depths)
    (root / "data.csv").write_text(DATASET)

    anchors = {"a1": AnchorSpec(pixel=(width / 2, height / 2), frame=0, mode="camera")}
    tracks = {}
    if with_object_anchor:
        anchors["a2"] = AnchorSpec(pixel=(width / 2, height / 2), frame=0, mode="object")
        lines = ["frame,u,v,visible"]
        for n in range(frames):
            lines.append(f"{n},{width / 2 + n},{height / 2},1")
        (root / "track_a2.csv").write_text("\n".join(lines) + "\n")
        tracks["a2"] = "track_a2.csv"

    project = Project(
        video=VideoRef(
            frames_dir="frames", fps=30.0, width=width, height=height, frame_count=frames
        ),
        intrinsics=result.intrinsics,
        depth_dir="depth",
        anchors=anchors,
        charts={
            "c1": ChartRef(
                chart_id="c1",
                spec=ChartSpec(kind="bar", mapping={"x": "year", "y": "count"}, size=(0.4, 0.3)),
                dataset="data.csv",
            )
        },
        segments=[
            TimelineSegment(
                segment_id="s1",
                chart_id="c1",
                anchor_id="a1",
                track_index=0,
                start_frame=0,
                end_frame=frames - 1,
                placement=Placement(offset=(0.0, 0.0, 0.0)),
            )
        ],
        odometry=OdometryConfig(max_features=80, search_radius_px=6, min_inliers=8, seed=3),
        tracks=tracks,
    )
    path = root / "project.json"
    save_project(project, path)
    return project, path


@pytest.fixture
def demo_project(tmp_path):
    return build_demo_project(tmp_path / "proj")
