"""Project data model, persistence, validation, and pipeline caching.

A project is a single JSON document with relative-path references to the
large binary assets (frame PNGs, depth maps, datasets, cached pose CSVs).
Serialization is canonical (sorted keys, two-space indent, trailing
newline) so save -> load -> save is byte-identical. Cached trajectories
carry the hash of the inputs they were computed from; any mutation of
those inputs invalidates the cache.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .camera_tracking import (
    AnchorSpec,
    OdometryConfig,
    RgbdFrame,
    recover_anchor_world_pose,
    solve_camera_trajectory,
)
from .charts import ChartSpec, load_dataset
from .compositing import RenderInputs, TimeMap, TimelineSegment
from .depth import DepthMap, DepthSequence, read_cbdm, read_depth_png
from .errors import (
    MissingDepth,
    MissingTrajectory,
    UnsupportedVersion,
    ValidationError,
)
from .geometry import (
    CameraTrajectory,
    Intrinsics,
    default_intrinsics,
    load_poses_csv,
    save_poses_csv,
)
from .object_tracking import (
    SmoothingConfig,
    load_track_csv,
    solve_object_poses,
    track_point_2d,
)

FORMAT_VERSION = 1

# Cache-entry key marking an externally supplied pose file (e.g. production
# odometry); trusted as-is instead of hash-checked against the inputs.
EXTERNAL_CACHE_KEY = "external"


@dataclass
class VideoRef:
    frames_dir: str
    fps: float
    width: int
    height: int
    frame_count: int

    def to_dict(self) -> dict:
        return {
            "frames_dir": self.frames_dir,
            "fps": self.fps,
            "width": self.width,
            "height": self.height,
            "frame_count": self.frame_count,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VideoRef":
        return cls(
            frames_dir=str(d["frames_dir"]),
            fps=float(d.get("fps", 30.0)),
            width=int(d["width"]),
            height=int(d["height"]),
            frame_count=int(d["frame_count"]),
        )


@dataclass
class ChartRef:
    chart_id: str
    spec: ChartSpec
    dataset: str  # relative path to a CSV

    def to_dict(self) -> dict:
        return {"id": self.chart_id, "spec": self.spec.to_dict(), "dataset": self.dataset}

    @classmethod
    def from_dict(cls, d: dict) -> "ChartRef":
        return cls(chart_id=str(d["id"]), spec=ChartSpec.from_dict(d["spec"]), dataset=str(d["dataset"]))


@dataclass
class CacheEntry:
    path: str
    key: str

    def to_dict(self) -> dict:
        return {"path": self.path, "key": self.key}

    @classmethod
    def from_dict(cls, d: dict) -> "CacheEntry":
        return cls(path=str(d["path"]), key=str(d["key"]))


@dataclass
class Project:
    video: VideoRef
    intrinsics: Intrinsics | None = None
    depth_dir: str | None = None
    anchors: dict[str, AnchorSpec] = field(default_factory=dict)
    charts: dict[str, ChartRef] = field(default_factory=dict)
    segments: list[TimelineSegment] = field(default_factory=list)
    time_map: TimeMap = field(default_factory=TimeMap)
    odometry: OdometryConfig = field(default_factory=OdometryConfig)
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    tracks: dict[str, str] = field(default_factory=dict)  # anchor_id -> 2D track CSV (ingest)
    camera_cache: CacheEntry | None = None
    object_caches: dict[str, CacheEntry] = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def effective_intrinsics(self) -> Intrinsics:
        if self.intrinsics is not None:
            return self.intrinsics
        return default_intrinsics(self.video.width, self.video.height)

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "video": self.video.to_dict(),
            "intrinsics": None if self.intrinsics is None else self.intrinsics.to_dict(),
            "depth_dir": self.depth_dir,
            "anchors": {aid: a.to_dict() for aid, a in self.anchors.items()},
            "charts": {cid: c.to_dict() for cid, c in self.charts.items()},
            "segments": [s.to_dict() for s in self.segments],
            "time_map": self.time_map.to_dict(),
            "odometry": self.odometry.to_dict(),
            "smoothing": self.smoothing.to_dict(),
            "tracks": dict(self.tracks),
            "camera_cache": None if self.camera_cache is None else self.camera_cache.to_dict(),
            "object_caches": {aid: c.to_dict() for aid, c in self.object_caches.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Project":
        version = int(d.get("version", -1))
        if version != FORMAT_VERSION:
            raise UnsupportedVersion(f"project format version {version} is not supported")
        return cls(
            video=VideoRef.from_dict(d["video"]),
            intrinsics=None if d.get("intrinsics") is None else Intrinsics.from_dict(d["intrinsics"]),
            depth_dir=d.get("depth_dir"),
            anchors={aid: AnchorSpec.from_dict(a) for aid, a in d.get("anchors", {}).items()},
            charts={cid: ChartRef.from_dict(c) for cid, c in d.get("charts", {}).items()},
            segments=[TimelineSegment.from_dict(s) for s in d.get("segments", [])],
            time_map=TimeMap.from_dict(d.get("time_map", {})),
            odometry=OdometryConfig.from_dict(d.get("odometry", {})),
            smoothing=SmoothingConfig.from_dict(d.get("smoothing", {})),
            tracks={aid: str(p) for aid, p in d.get("tracks", {}).items()},
            camera_cache=None
            if d.get("camera_cache") is None
            else CacheEntry.from_dict(d["camera_cache"]),
            object_caches={
                aid: CacheEntry.from_dict(c) for aid, c in d.get("object_caches", {}).items()
            },
            version=version,
        )


def validate_project(project: Project) -> None:
    video = project.video
    if video.frame_count < 1 or video.width < 1 or video.height < 1:
        raise ValidationError("video", "frame_count and dimensions must be positive")
    if video.fps <= 0:
        raise ValidationError("video", "fps must be positive")
    for aid, anchor in project.anchors.items():
        u, v = anchor.pixel
        if not (0 <= u < video.width and 0 <= v < video.height):
            raise ValidationError("anchors", f"anchor {aid} pixel outside the frame")
        if not (0 <= anchor.frame < video.frame_count):
            raise ValidationError("anchors", f"anchor {aid} frame outside the video")
    by_track: dict[int, list[TimelineSegment]] = {}
    for seg in project.segments:
        if seg.chart_id not in project.charts:
            raise ValidationError("segments", f"segment {seg.segment_id} references unknown chart")
        if seg.anchor_id not in project.anchors:
            raise ValidationError("segments", f"segment {seg.segment_id} references unknown anchor")
        if seg.start_frame < 0 or seg.end_frame >= video.frame_count:
            raise ValidationError(
                "segments", f"segment {seg.segment_id} range outside the video"
            )
        by_track.setdefault(seg.track_index, []).append(seg)
    for track, segs in by_track.items():
        segs = sorted(segs, key=lambda s: s.start_frame)
        for a, b in zip(segs, segs[1:]):
            if b.start_frame <= a.end_frame:
                raise ValidationError(
                    "segments", f"segments {a.segment_id} and {b.segment_id} overlap on track {track}"
                )
    if project.time_map.rate <= 0:
        raise ValidationError("time_map", "rate must be positive")


def _canonical_json(data) -> str:
    return json.dumps(data, sort_keys=True, indent=2) + "\n"


def atomic_write_bytes(path, payload: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_project(project: Project, path) -> None:
    validate_project(project)
    atomic_write_bytes(path, _canonical_json(project.to_dict()).encode("utf-8"))


def load_project(path) -> Project:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    project = Project.from_dict(data)
    validate_project(project)
    return project


# -- cache keys ---------------------------------------------------------------

def _digest(payload) -> str:
    return hashlib.sha256(_canonical_json(payload).encode("utf-8")).hexdigest()


def camera_cache_key(project: Project) -> str:
    return _digest(
        {
            "kind": "camera-trajectory",
            "video": project.video.to_dict(),
            "intrinsics": project.effective_intrinsics().to_dict(),
            "depth_dir": project.depth_dir,
            "odometry": project.odometry.to_dict(),
        }
    )


def object_cache_key(project: Project, anchor_id: str) -> str:
    anchor = project.anchors[anchor_id]
    return _digest(
        {
            "kind": "object-poses",
            "video": project.video.to_dict(),
            "intrinsics": project.effective_intrinsics().to_dict(),
            "depth_dir": project.depth_dir,
            "anchor": anchor.to_dict(),
            "smoothing": project.smoothing.to_dict(),
            "track": project.tracks.get(anchor_id),
        }
    )


def render_cache_key(project: Project) -> str:
    return _digest(
        {
            "kind": "render",
            "camera": camera_cache_key(project),
            "objects": {aid: object_cache_key(project, aid) for aid in project.anchors
                        if project.anchors[aid].mode == "object"},
            "anchors": {aid: a.to_dict() for aid, a in project.anchors.items()},
            "charts": {cid: c.to_dict() for cid, c in project.charts.items()},
            "segments": [s.to_dict() for s in project.segments],
            "time_map": project.time_map.to_dict(),
        }
    )


# -- asset access -------------------------------------------------------------

def frame_path(base_dir, project: Project, n: int) -> Path:
    return Path(base_dir) / project.video.frames_dir / f"frame_{n:06d}.png"


def load_frame(base_dir, project: Project, n: int) -> np.ndarray:
    path = frame_path(base_dir, project, n)
    if not path.exists():
        raise ValidationError("video", f"missing frame file {path}")
    arr = np.asarray(Image.open(path).convert("RGB"))
    return arr


def write_frames(directory, frames) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for n, frame in enumerate(frames):
        Image.fromarray(np.asarray(frame, dtype=np.uint8)).save(
            directory / f"frame_{n:06d}.png"
        )


class LazyDepths:
    """Frame-indexed depth access that loads maps on demand."""

    def __init__(self, depth_dir: Path, frame_count: int):
        self.depth_dir = Path(depth_dir)
        self.frame_count = frame_count
        self._cache: dict[int, DepthMap] = {}

    def __len__(self):
        return self.frame_count

    def __getitem__(self, n: int) -> DepthMap:
        if n not in self._cache:
            cbdm = self.depth_dir / f"depth_{n:06d}.cbdm"
            png = self.depth_dir / f"depth_{n:06d}.png"
            if cbdm.exists():
                values = read_cbdm(cbdm)
            elif png.exists():
                values = read_depth_png(png)
            else:
                raise MissingDepth(f"no depth file for frame {n} in {self.depth_dir}")
            self._cache[n] = DepthMap(values=values, frame_index=n)
        return self._cache[n]


def _depths(base_dir, project: Project) -> LazyDepths:
    if project.depth_dir is None:
        raise MissingDepth("project has no depth directory")
    depth_dir = Path(base_dir) / project.depth_dir
    if not depth_dir.exists():
        raise MissingDepth(f"depth directory {depth_dir} does not exist")
    return LazyDepths(depth_dir, project.video.frame_count)


# -- pipelines ----------------------------------------------------------------

def _cache_entry_valid(entry: CacheEntry | None, expected_key: str, base_dir: Path) -> bool:
    if entry is None or not (base_dir / entry.path).exists():
        return False
    return entry.key == expected_key or entry.key == EXTERNAL_CACHE_KEY


def run_camera_tracking(
    project: Project, base_dir, force: bool = False, threads: int = 1
) -> CameraTrajectory:
    """Solve (or reuse) the camera trajectory; updates the project cache entry.

    A cache entry keyed "external" points at an ingested pose CSV and is
    never recomputed (unless force).
    """
    base_dir = Path(base_dir)
    key = camera_cache_key(project)
    entry = project.camera_cache
    if not force and _cache_entry_valid(entry, key, base_dir):
        return CameraTrajectory.load_csv(base_dir / entry.path)
    depths = _depths(base_dir, project)
    frames = [
        RgbdFrame(rgb=load_frame(base_dir, project, n), depth=depths[n], index=n)
        for n in range(project.video.frame_count)
    ]
    trajectory = solve_camera_trajectory(
        frames, project.effective_intrinsics(), project.odometry, threads=threads
    )
    rel_path = f"cache/camera_{key[:12]}.csv"
    out = base_dir / rel_path
    out.parent.mkdir(parents=True, exist_ok=True)
    trajectory.save_csv(out)
    project.camera_cache = CacheEntry(path=rel_path, key=key)
    return trajectory


def run_object_tracking(project: Project, base_dir, anchor_id: str, force: bool = False):
    """Solve (or reuse) per-frame object poses for one object-mode anchor."""
    base_dir = Path(base_dir)
    anchor = project.anchors.get(anchor_id)
    if anchor is None or anchor.mode != "object":
        raise ValidationError("anchors", f"{anchor_id} is not an object-mode anchor")
    key = object_cache_key(project, anchor_id)
    entry = project.object_caches.get(anchor_id)
    if not force and _cache_entry_valid(entry, key, base_dir):
        return load_poses_csv(base_dir / entry.path)
    depths = _depths(base_dir, project)
    depth_seq = DepthSequence(
        maps=[depths[n] for n in range(project.video.frame_count)], source="ingested"
    )
    if anchor_id in project.tracks:
        track = load_track_csv(base_dir / project.tracks[anchor_id], seed=anchor)
    else:
        frames = [load_frame(base_dir, project, n) for n in range(project.video.frame_count)]
        track = track_point_2d(frames, anchor)
    poses = solve_object_poses(track, depth_seq, project.effective_intrinsics(), project.smoothing)
    rel_path = f"cache/object_{anchor_id}_{key[:12]}.csv"
    out = base_dir / rel_path
    out.parent.mkdir(parents=True, exist_ok=True)
    save_poses_csv(list(poses), out)
    track.save_csv(base_dir / f"cache/track_{anchor_id}_{key[:12]}.csv")
    project.object_caches[anchor_id] = CacheEntry(path=rel_path, key=key)
    return list(poses)


def resolve_render_inputs(project: Project, base_dir) -> RenderInputs:
    """Assemble RenderInputs from cached pipeline outputs; never re-tracks."""
    base_dir = Path(base_dir)
    validate_project(project)
    k = project.effective_intrinsics()

    camera_anchor_ids = set()
    object_anchor_ids = set()
    for seg in project.segments:
        anchor = project.anchors[seg.anchor_id]
        (camera_anchor_ids if anchor.mode == "camera" else object_anchor_ids).add(seg.anchor_id)

    trajectory = None
    if camera_anchor_ids:
        entry = project.camera_cache
        key = camera_cache_key(project)
        if not _cache_entry_valid(entry, key, base_dir):
            raise MissingTrajectory(
                "camera trajectory is not cached for the current inputs; run track-camera"
            )
        trajectory = CameraTrajectory.load_csv(base_dir / entry.path)

    anchor_world_poses = {}
    if camera_anchor_ids:
        depths = _depths(base_dir, project)
        for aid in sorted(camera_anchor_ids):
            anchor_world_poses[aid] = recover_anchor_world_pose(
                project.anchors[aid], depths, trajectory, k
            )

    object_poses = {}
    for aid in sorted(object_anchor_ids):
        entry = project.object_caches.get(aid)
        key = object_cache_key(project, aid)
        if not _cache_entry_valid(entry, key, base_dir):
            raise MissingTrajectory(
                f"object poses for anchor {aid} are not cached; run track-object"
            )
        object_poses[aid] = load_poses_csv(base_dir / entry.path)

    charts = {}
    for cid, ref in project.charts.items():
        dataset_path = base_dir / ref.dataset
        if not dataset_path.exists():
            raise ValidationError("charts", f"dataset {dataset_path} does not exist")
        charts[cid] = (ref.spec, load_dataset(dataset_path))

    return RenderInputs(
        frame_count=project.video.frame_count,
        get_frame=lambda n: load_frame(base_dir, project, n),
        intrinsics=k,
        charts=charts,
        segments=list(project.segments),
        anchor_world_poses=anchor_world_poses,
        object_poses=object_poses,
        camera_trajectory=trajectory,
        time_map=project.time_map,
    )
