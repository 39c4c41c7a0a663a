"""Perspective-consistent chart compositing.

Chart canvases are planar quads placed relative to an anchor pose (world
frame for camera tracking, per-frame camera frame for object tracking),
projected through the pinhole model, warped by the induced homography with
inverse-mapped bilinear sampling, and alpha-over blended in ascending
track order. Charts always render over the video (no scene depth test);
quads with a corner closer than the near plane are culled whole.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera_tracking import AnchorWorldPose
from .charts import ChartCanvas, ChartSpec, DataTable, TemporalBehavior, build_chart, temporal_opacity
from .errors import MissingTrajectory
from .geometry import CameraTrajectory, Intrinsics, RigidTransform, project_points

NEAR_PLANE_M = 0.01


@dataclass
class Placement:
    """Author-adjusted offset/rotation/scale relative to the anchor frame."""

    offset: np.ndarray = None
    rotation: np.ndarray = None
    scale: float = 1.0

    def __post_init__(self):
        self.offset = (
            np.zeros(3) if self.offset is None else np.asarray(self.offset, dtype=np.float64).reshape(3)
        )
        self.rotation = (
            np.eye(3) if self.rotation is None else np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        )
        if self.scale <= 0:
            raise ValueError("placement scale must be positive")
        # rotation must stay in SO(3); reuse the transform validator
        RigidTransform(self.rotation, self.offset)

    def to_dict(self) -> dict:
        q = RigidTransform(self.rotation, self.offset).to_quaternion()
        return {
            "offset": self.offset.tolist(),
            "rotation_quat": q.tolist(),
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Placement":
        rot = np.eye(3)
        if "rotation_quat" in d:
            rot = RigidTransform.from_quaternion(d["rotation_quat"], [0, 0, 0]).rotation
        return cls(offset=d.get("offset"), rotation=rot, scale=float(d.get("scale", 1.0)))


@dataclass
class TimelineSegment:
    """One chart active over an inclusive frame range on a draw track."""

    segment_id: str
    chart_id: str
    anchor_id: str
    track_index: int = 0
    start_frame: int = 0
    end_frame: int = 0
    behavior: TemporalBehavior = field(default_factory=TemporalBehavior)
    placement: Placement = field(default_factory=Placement)

    def __post_init__(self):
        if self.track_index < 0:
            raise ValueError("track_index must be >= 0")
        if self.start_frame > self.end_frame:
            raise ValueError("segment start must not exceed end")

    def to_dict(self) -> dict:
        return {
            "id": self.segment_id,
            "chart_id": self.chart_id,
            "anchor_id": self.anchor_id,
            "track_index": self.track_index,
            "start_frame": self.start_frame,
            "end_frame": self.end_frame,
            "behavior": self.behavior.to_dict(),
            "placement": self.placement.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TimelineSegment":
        return cls(
            segment_id=str(d["id"]),
            chart_id=str(d["chart_id"]),
            anchor_id=str(d["anchor_id"]),
            track_index=int(d.get("track_index", 0)),
            start_frame=int(d.get("start_frame", 0)),
            end_frame=int(d.get("end_frame", 0)),
            behavior=TemporalBehavior.from_dict(d.get("behavior", {})),
            placement=Placement.from_dict(d.get("placement", {})),
        )


@dataclass
class ComposedFrame:
    raster: np.ndarray  # (H, W, 3) uint8
    frame_index: int
    warnings: list[str] = field(default_factory=list)


def _pose_parts(pose) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(pose, AnchorWorldPose):
        return pose.orientation, pose.position
    if isinstance(pose, RigidTransform):
        return pose.rotation, pose.translation
    raise TypeError(f"unsupported anchor pose type {type(pose)!r}")


def chart_world_quad(pose, placement: Placement, extent) -> np.ndarray:
    """Quad corners (TL, TR, BR, BL) of the placed chart rectangle.

    Returned in the frame the anchor pose lives in (world for camera-mode
    anchors, camera for object poses). Canvas u grows right, v grows down.
    """
    rot, pos = _pose_parts(pose)
    if np.isscalar(extent):
        w = h = float(extent)
    else:
        w, h = float(extent[0]), float(extent[1])
    local = np.array(
        [
            [-w / 2, -h / 2, 0.0],
            [w / 2, -h / 2, 0.0],
            [w / 2, h / 2, 0.0],
            [-w / 2, h / 2, 0.0],
        ]
    )
    placed = (placement.scale * local) @ placement.rotation.T + placement.offset
    return placed @ rot.T + pos


def fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Exact 3x3 homography from 4 point correspondences (DLT, SVD null space)."""
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    rows = []
    for (x, y), (u, v) in zip(src, dst):
        rows.append([x, y, 1, 0, 0, 0, -u * x, -u * y, -u])
        rows.append([0, 0, 0, x, y, 1, -v * x, -v * y, -v])
    a = np.asarray(rows)
    _, _, vt = np.linalg.svd(a)
    h = vt[-1].reshape(3, 3)
    if abs(h[2, 2]) > 1e-12:
        h = h / h[2, 2]
    return h


def _warp_blend(frame_f: np.ndarray, canvas: ChartCanvas, img_corners: np.ndarray, opacity: float):
    """Inverse-map the canvas onto frame_f (float32 premultiplied-over blend)."""
    h_frame, w_frame = frame_f.shape[:2]
    ch, cw = canvas.raster.shape[:2]
    canvas_corners = np.array(
        [[0.0, 0.0], [cw - 1.0, 0.0], [cw - 1.0, ch - 1.0], [0.0, ch - 1.0]]
    )
    h_img_to_canvas = fit_homography(img_corners, canvas_corners)

    x0 = max(int(np.floor(img_corners[:, 0].min())), 0)
    x1 = min(int(np.ceil(img_corners[:, 0].max())) + 1, w_frame)
    y0 = max(int(np.floor(img_corners[:, 1].min())), 0)
    y1 = min(int(np.ceil(img_corners[:, 1].max())) + 1, h_frame)
    if x0 >= x1 or y0 >= y1:
        return

    us, vs = np.meshgrid(np.arange(x0, x1, dtype=np.float64), np.arange(y0, y1, dtype=np.float64))
    ones = np.ones_like(us)
    mapped = np.tensordot(h_img_to_canvas, np.stack([us, vs, ones]), axes=([1], [0]))
    with np.errstate(divide="ignore", invalid="ignore"):
        s = mapped[0] / mapped[2]
        t = mapped[1] / mapped[2]
    inside = np.isfinite(s) & np.isfinite(t) & (s >= 0) & (s <= cw - 1) & (t >= 0) & (t <= ch - 1)
    if not inside.any():
        return

    sx = s[inside]
    ty = t[inside]
    xi = np.clip(np.floor(sx).astype(int), 0, cw - 2) if cw > 1 else np.zeros_like(sx, dtype=int)
    yi = np.clip(np.floor(ty).astype(int), 0, ch - 2) if ch > 1 else np.zeros_like(ty, dtype=int)
    fx = (sx - xi)[:, None]
    fy = (ty - yi)[:, None]
    raster = canvas.raster.astype(np.float32) / 255.0
    c00 = raster[yi, xi]
    c10 = raster[yi, np.minimum(xi + 1, cw - 1)]
    c01 = raster[np.minimum(yi + 1, ch - 1), xi]
    c11 = raster[np.minimum(yi + 1, ch - 1), np.minimum(xi + 1, cw - 1)]
    src = (
        c00 * (1 - fx) * (1 - fy) + c10 * fx * (1 - fy) + c01 * (1 - fx) * fy + c11 * fx * fy
    ) * opacity

    region = frame_f[y0:y1, x0:x1]
    dst = region[inside]
    alpha = src[:, 3:4]
    region[inside] = src[:, :3] + dst * (1.0 - alpha)
    frame_f[y0:y1, x0:x1] = region


def composite_frame(
    frame: np.ndarray,
    active,
    k: Intrinsics,
    m_n: RigidTransform | None = None,
    frame_index: int = 0,
) -> ComposedFrame:
    """Blend active charts onto one video frame.

    active: iterable of (ChartCanvas, quad corners (4, 3), opacity), already
    ordered by ascending track index. Quads are world-frame when m_n is
    given, camera-frame otherwise. A quad with any corner at z <= 0.01 m is
    culled whole and recorded as a warning.
    """
    frame = np.asarray(frame)
    warnings: list[str] = []
    frame_f = frame.astype(np.float32) / 255.0
    touched = False
    for idx, (canvas, quad, opacity) in enumerate(active):
        quad = np.asarray(quad, dtype=np.float64).reshape(4, 3)
        cam = quad if m_n is None else m_n.apply(quad)
        if (cam[:, 2] <= NEAR_PLANE_M).any():
            warnings.append(f"chart {idx}: culled (corner within {NEAR_PLANE_M} m of camera)")
            continue
        if opacity <= 0.0:
            continue
        img_corners = project_points(cam, k)
        _warp_blend(frame_f, canvas, img_corners, float(opacity))
        touched = True
    if not touched:
        return ComposedFrame(raster=frame.copy(), frame_index=frame_index, warnings=warnings)
    out = np.clip(np.rint(frame_f * 255.0), 0, 255).astype(np.uint8)
    return ComposedFrame(raster=out, frame_index=frame_index, warnings=warnings)


def apply_unveil(canvas: ChartCanvas, fraction: float) -> ChartCanvas:
    """Left-to-right wipe: columns beyond the revealed fraction go transparent."""
    if fraction >= 1.0:
        return canvas
    raster = canvas.raster.copy()
    cw = raster.shape[1]
    cutoff = int(np.floor(np.clip(fraction, 0.0, 1.0) * cw))
    raster[:, cutoff:, :] = 0
    return ChartCanvas(raster=raster, origin=canvas.origin, extent=canvas.extent)


@dataclass
class TimeMap:
    """Linear data-time <-> video-frame alignment: t = t0 + (frame - f0) * rate."""

    t0: float = 0.0
    f0: float = 0.0
    rate: float = 1.0

    def data_time(self, frame: int) -> float:
        return self.t0 + (frame - self.f0) * self.rate

    def to_dict(self) -> dict:
        return {"t0": self.t0, "f0": self.f0, "rate": self.rate}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeMap":
        return cls(t0=float(d.get("t0", 0.0)), f0=float(d.get("f0", 0.0)), rate=float(d.get("rate", 1.0)))


@dataclass
class RenderInputs:
    """Everything render_project needs, already resolved from storage."""

    frame_count: int
    get_frame: object  # callable n -> (H, W, 3) uint8
    intrinsics: Intrinsics
    charts: dict  # chart_id -> (ChartSpec, DataTable)
    segments: list[TimelineSegment]
    anchor_world_poses: dict  # anchor_id -> AnchorWorldPose (camera mode)
    object_poses: dict  # anchor_id -> list[RigidTransform] (object mode)
    camera_trajectory: CameraTrajectory | None = None
    time_map: TimeMap = field(default_factory=TimeMap)


class _ChartRasterCache:
    """Charts are pure in (spec, table, t): cache by (chart_id, quantized t)."""

    def __init__(self, charts):
        self.charts = charts
        self._cache: dict = {}

    def get(self, chart_id: str, t: float | None) -> ChartCanvas:
        key = (chart_id, None if t is None else round(float(t), 6))
        if key not in self._cache:
            spec, table = self.charts[chart_id]
            self._cache[key] = build_chart(spec, table, t)
        return self._cache[key]


def render_frame(inputs: RenderInputs, n: int, cache: _ChartRasterCache | None = None) -> ComposedFrame:
    cache = cache or _ChartRasterCache(inputs.charts)
    active = []  # (track, segment order, canvas, camera-frame quad, opacity)
    warnings: list[str] = []
    for order, seg in enumerate(inputs.segments):
        if not (seg.start_frame <= n <= seg.end_frame):
            continue
        opacity, unveil = temporal_opacity(seg.behavior, (seg.start_frame, seg.end_frame), n)
        if opacity <= 0.0:
            continue
        spec, _ = inputs.charts[seg.chart_id]
        has_timestamp = "timestamp" in spec.mapping
        t = inputs.time_map.data_time(n) if has_timestamp else None
        canvas = cache.get(seg.chart_id, t)
        if unveil < 1.0:
            canvas = apply_unveil(canvas, unveil)
        if seg.anchor_id in inputs.object_poses:
            poses = inputs.object_poses[seg.anchor_id]
            if n >= len(poses):
                warnings.append(f"segment {seg.segment_id}: no object pose for frame {n}")
                continue
            quad = chart_world_quad(poses[n], seg.placement, canvas.extent)
        elif seg.anchor_id in inputs.anchor_world_poses:
            if inputs.camera_trajectory is None:
                raise MissingTrajectory("camera-mode segments require a camera trajectory")
            pose = inputs.anchor_world_poses[seg.anchor_id]
            world_quad = chart_world_quad(pose, seg.placement, canvas.extent)
            quad = inputs.camera_trajectory[n].apply(world_quad)
        else:
            raise MissingTrajectory(
                f"segment {seg.segment_id}: anchor {seg.anchor_id} has no resolved pose"
            )
        active.append((seg.track_index, order, canvas, quad, opacity))

    frame = inputs.get_frame(n)
    if not active:
        return ComposedFrame(raster=np.asarray(frame).copy(), frame_index=n, warnings=warnings)
    active.sort(key=lambda item: (item[0], item[1]))
    composed = composite_frame(
        frame, [(c, q, o) for _, _, c, q, o in active], inputs.intrinsics, None, n
    )
    composed.warnings = warnings + composed.warnings
    return composed


def render_project_frames(inputs: RenderInputs):
    """Yield composed frames in order; frame-level purity keeps this
    restartable and order-independent."""
    cache = _ChartRasterCache(inputs.charts)
    for n in range(inputs.frame_count):
        yield render_frame(inputs, n, cache)
