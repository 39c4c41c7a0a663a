"""Analytic ground-truth scene generator for the evaluation harness.

Scenes are textured bounded rectangles (boxes decompose into six of them)
viewed along a camera path, rendered by exact ray-rectangle intersection:
RGB frames, exact per-pixel depth, exact poses, and exact target tracks.
Scenes are authored in arbitrary scene coordinates and re-based so the
frame-0 camera is the world origin (trajectory invariant M_0 = I).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera_tracking import AnchorSpec
from .depth import DepthMap, DepthSequence
from .errors import InvalidSceneSpec
from .geometry import (
    CameraTrajectory,
    Intrinsics,
    RigidTransform,
    compose,
    default_intrinsics,
    invert,
    project_points,
)
from .object_tracking import Track2D


@dataclass
class TexturedRect:
    """Bounded rectangle: origin corner plus two orthogonal edge vectors."""

    origin: np.ndarray
    edge_u: np.ndarray
    edge_v: np.ndarray
    texture_seed: int = 0
    texture_res: int = 64
    base_color: tuple[float, float, float] = (0.85, 0.8, 0.72)
    contrast: float = 0.65
    motion: np.ndarray | None = None  # (N, 3) per-frame offsets of the origin

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
        self.edge_u = np.asarray(self.edge_u, dtype=np.float64).reshape(3)
        self.edge_v = np.asarray(self.edge_v, dtype=np.float64).reshape(3)
        if self.motion is not None:
            self.motion = np.asarray(self.motion, dtype=np.float64).reshape(-1, 3)


def box_rects(center, size, texture_seed: int = 0, **kwargs) -> list[TexturedRect]:
    """Axis-aligned box as six textured rectangles."""
    c = np.asarray(center, dtype=np.float64)
    sx, sy, sz = (float(s) / 2 for s in size)
    rects = []
    faces = [
        ((-sx, -sy, -sz), (2 * sx, 0, 0), (0, 2 * sy, 0)),  # back (z-)
        ((-sx, -sy, +sz), (2 * sx, 0, 0), (0, 2 * sy, 0)),  # front (z+)
        ((-sx, -sy, -sz), (0, 2 * sy, 0), (0, 0, 2 * sz)),  # left
        ((+sx, -sy, -sz), (0, 2 * sy, 0), (0, 0, 2 * sz)),  # right
        ((-sx, -sy, -sz), (2 * sx, 0, 0), (0, 0, 2 * sz)),  # top (y-)
        ((-sx, +sy, -sz), (2 * sx, 0, 0), (0, 0, 2 * sz)),  # bottom (y+)
    ]
    for i, (corner, eu, ev) in enumerate(faces):
        rects.append(
            TexturedRect(
                origin=c + np.array(corner), edge_u=eu, edge_v=ev,
                texture_seed=texture_seed + i, **kwargs,
            )
        )
    return rects


@dataclass
class TargetSpec:
    """Moving point target; billboard_size > 0 attaches a textured square
    centered on the target so the builtin 2D tracker has visual support."""

    path: np.ndarray  # (N, 3) scene coordinates per frame
    billboard_size: float = 0.0
    billboard_seed: int = 7

    def __post_init__(self):
        self.path = np.asarray(self.path, dtype=np.float64).reshape(-1, 3)


@dataclass
class CameraPathSpec:
    kind: str = "static"  # static | translate | orbit
    delta: tuple[float, float, float] = (0.0, 0.0, 0.0)  # translate: center shift per frame
    look_at: tuple[float, float, float] = (0.0, 0.0, 2.0)  # orbit target
    radius: float = 2.0
    angle_start_deg: float = 0.0
    angle_step_deg: float = 0.5


@dataclass
class SceneSpec:
    width: int = 320
    height: int = 240
    frames: int = 10
    intrinsics: Intrinsics | None = None
    rects: list[TexturedRect] = field(default_factory=list)
    camera: CameraPathSpec = field(default_factory=CameraPathSpec)
    targets: list[TargetSpec] = field(default_factory=list)
    background_gray: int = 36


@dataclass
class SynthResult:
    frames: np.ndarray  # (N, H, W, 3) uint8
    depths: DepthSequence
    trajectory: CameraTrajectory  # ground truth, M_0 = identity
    tracks: list[Track2D]  # ground-truth pixel tracks, one per target
    target_points_camera: list[np.ndarray]  # (N, 3) per target, camera frame
    target_paths_world: list[np.ndarray]  # (N, 3) per target, world frame
    rects_world: list[TexturedRect]  # static geometry re-based to world
    intrinsics: Intrinsics


def _look_at_pose(center: np.ndarray, target: np.ndarray) -> RigidTransform:
    """World-to-camera pose with +z toward the target, y down-ish."""
    zc = target - center
    zc = zc / np.linalg.norm(zc)
    up = np.array([0.0, 1.0, 0.0])
    xc = np.cross(up, zc)
    if np.linalg.norm(xc) < 1e-9:
        up = np.array([1.0, 0.0, 0.0])
        xc = np.cross(up, zc)
    xc = xc / np.linalg.norm(xc)
    yc = np.cross(zc, xc)
    r = np.stack([xc, yc, zc])
    return RigidTransform(r, -(r @ center))


def _camera_path(spec: SceneSpec) -> list[RigidTransform]:
    cam = spec.camera
    poses = []
    if cam.kind == "static":
        poses = [RigidTransform.identity() for _ in range(spec.frames)]
    elif cam.kind == "translate":
        delta = np.asarray(cam.delta, dtype=np.float64)
        for n in range(spec.frames):
            center = n * delta
            poses.append(RigidTransform(np.eye(3), -center))
    elif cam.kind == "orbit":
        look_at = np.asarray(cam.look_at, dtype=np.float64)
        for n in range(spec.frames):
            theta = np.deg2rad(cam.angle_start_deg + n * cam.angle_step_deg)
            center = look_at + cam.radius * np.array([np.sin(theta), 0.0, -np.cos(theta)])
            poses.append(_look_at_pose(center, look_at))
    else:
        raise InvalidSceneSpec(f"unknown camera path kind {cam.kind!r}")
    return poses


def _texture_grid(seed: int, res: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, size=(res, res))


def _sample_texture(grid: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    res = grid.shape[0]
    x = np.clip(a, 0.0, 1.0) * (res - 1)
    y = np.clip(b, 0.0, 1.0) * (res - 1)
    x0 = np.clip(np.floor(x).astype(int), 0, res - 2)
    y0 = np.clip(np.floor(y).astype(int), 0, res - 2)
    fx = x - x0
    fy = y - y0
    g00 = grid[y0, x0]
    g10 = grid[y0, x0 + 1]
    g01 = grid[y0 + 1, x0]
    g11 = grid[y0 + 1, x0 + 1]
    return g00 * (1 - fx) * (1 - fy) + g10 * fx * (1 - fy) + g01 * (1 - fx) * fy + g11 * fx * fy


def _validate(spec: SceneSpec) -> None:
    if spec.frames < 1:
        raise InvalidSceneSpec("scene needs at least one frame")
    if spec.width < 16 or spec.height < 16:
        raise InvalidSceneSpec("frame size must be at least 16x16")
    if not spec.rects and not spec.targets:
        raise InvalidSceneSpec("scene must contain rectangles or targets")
    for i, rect in enumerate(spec.rects):
        lu = np.linalg.norm(rect.edge_u)
        lv = np.linalg.norm(rect.edge_v)
        if lu < 1e-9 or lv < 1e-9:
            raise InvalidSceneSpec(f"rect {i} has a degenerate edge")
        if abs(np.dot(rect.edge_u, rect.edge_v)) > 1e-9 * lu * lv:
            raise InvalidSceneSpec(f"rect {i} edges must be orthogonal")
        if rect.motion is not None and len(rect.motion) != spec.frames:
            raise InvalidSceneSpec(f"rect {i} motion must cover all {spec.frames} frames")
    for i, target in enumerate(spec.targets):
        if len(target.path) != spec.frames:
            raise InvalidSceneSpec(f"target {i} path must cover all {spec.frames} frames")


def synth_scene(spec: SceneSpec, seed: int = 0) -> SynthResult:
    """Render the scene analytically; deterministic per (spec, seed)."""
    _validate(spec)
    k = spec.intrinsics or default_intrinsics(spec.width, spec.height)
    if (k.width, k.height) != (spec.width, spec.height):
        raise InvalidSceneSpec("intrinsics dimensions must match the frame size")

    scene_poses = _camera_path(spec)
    w0_inv = invert(scene_poses[0])
    # Re-base: world frame = frame-0 camera frame.
    poses = [compose(p, w0_inv) for p in scene_poses]
    poses[0] = RigidTransform.identity()
    trajectory = CameraTrajectory(poses)
    to_world = scene_poses[0]  # scene -> world is the frame-0 scene pose

    rects = list(spec.rects)
    rect_motion = [r.motion for r in rects]
    for t_idx, target in enumerate(spec.targets):
        if target.billboard_size > 0:
            size = target.billboard_size
            path0 = target.path[0]
            rects.append(
                TexturedRect(
                    origin=path0 + np.array([-size / 2, -size / 2, 0.0]),
                    edge_u=(size, 0.0, 0.0),
                    edge_v=(0.0, size, 0.0),
                    texture_seed=target.billboard_seed + t_idx,
                    texture_res=16,
                    base_color=(0.95, 0.55, 0.25),
                    contrast=0.8,
                )
            )
            rect_motion.append(target.path - path0)

    rects_world = []
    for rect, motion in zip(rects, rect_motion):
        rects_world.append(
            TexturedRect(
                origin=to_world.apply(rect.origin),
                edge_u=to_world.rotation @ rect.edge_u,
                edge_v=to_world.rotation @ rect.edge_v,
                texture_seed=rect.texture_seed,
                texture_res=rect.texture_res,
                base_color=rect.base_color,
                contrast=rect.contrast,
                motion=None if motion is None else motion @ to_world.rotation.T,
            )
        )
    textures = [
        _texture_grid(seed * 1009 + r.texture_seed, r.texture_res) for r in rects_world
    ]

    h, w = spec.height, spec.width
    us, vs = np.meshgrid(np.arange(w, dtype=np.float64), np.arange(h, dtype=np.float64))
    dirs_cam = np.stack([(us - k.cx) / k.fx, (vs - k.cy) / k.fy, np.ones_like(us)], axis=-1)

    frames = np.empty((spec.frames, h, w, 3), dtype=np.uint8)
    depth_maps = []
    for n, pose in enumerate(trajectory):
        r = pose.rotation
        center = -(r.T @ pose.translation)
        dirs_world = dirs_cam @ r  # == dirs_cam @ (r^T)^T
        depth = np.zeros((h, w))
        color = np.full((h, w, 3), spec.background_gray / 255.0)
        for rect, texture in zip(rects_world, textures):
            origin = rect.origin if rect.motion is None else rect.origin + rect.motion[n]
            eu, ev = rect.edge_u, rect.edge_v
            normal = np.cross(eu, ev)
            denom = dirs_world @ normal
            with np.errstate(divide="ignore", invalid="ignore"):
                s = ((origin - center) @ normal) / denom
            hit = center + s[..., None] * dirs_world
            rel = hit - origin
            a = (rel @ eu) / (eu @ eu)
            b = (rel @ ev) / (ev @ ev)
            inside = (
                (np.abs(denom) > 1e-12)
                & (s > 1e-6)
                & (a >= 0.0) & (a <= 1.0)
                & (b >= 0.0) & (b <= 1.0)
            )
            closer = inside & ((depth == 0.0) | (s < depth))
            if not np.any(closer):
                continue
            tex = _sample_texture(texture, a[closer], b[closer])
            shade = (1.0 - rect.contrast) + rect.contrast * tex
            color[closer] = np.asarray(rect.base_color) * shade[..., None]
            depth[closer] = s[closer]
        frames[n] = np.clip(np.rint(color * 255.0), 0, 255).astype(np.uint8)
        depth_maps.append(DepthMap(values=depth.astype(np.float32), frame_index=n))

    depths = DepthSequence(maps=depth_maps, source="synthetic")

    tracks = []
    target_points_camera = []
    target_paths_world = []
    for target in spec.targets:
        world_path = target.path @ to_world.rotation.T + to_world.translation
        cam_points = np.empty_like(world_path)
        pixels = np.empty((spec.frames, 2))
        visible = np.zeros(spec.frames, dtype=bool)
        for n, pose in enumerate(trajectory):
            p_cam = pose.apply(world_path[n])
            cam_points[n] = p_cam
            if p_cam[2] > 1e-6:
                px = project_points(p_cam[None, :], k)[0]
                pixels[n] = px
                visible[n] = (0 <= px[0] < w) and (0 <= px[1] < h)
            else:
                pixels[n] = (0.0, 0.0)
        first_vis = int(np.argmax(visible)) if visible.any() else 0
        held = pixels.copy()
        last = pixels[first_vis]
        for n in range(spec.frames):
            if visible[n]:
                last = pixels[n]
            held[n] = last
        seed_spec = AnchorSpec(pixel=tuple(held[first_vis]), frame=first_vis, mode="object")
        tracks.append(Track2D(points=held, visible=visible, seed=seed_spec))
        target_points_camera.append(cam_points)
        target_paths_world.append(world_path)

    return SynthResult(
        frames=frames,
        depths=depths,
        trajectory=trajectory,
        tracks=tracks,
        target_points_camera=target_points_camera,
        target_paths_world=target_paths_world,
        rects_world=rects_world,
        intrinsics=k,
    )


def plane_scene(
    width: int = 320,
    height: int = 240,
    frames: int = 10,
    plane_z: float = 2.0,
    plane_size: tuple[float, float] = (6.0, 4.5),
    camera: CameraPathSpec | None = None,
    texture_res: int = 96,
) -> SceneSpec:
    """Single fronto-parallel textured plane filling the view at depth plane_z."""
    sw, sh = plane_size
    rect = TexturedRect(
        origin=(-sw / 2, -sh / 2, plane_z),
        edge_u=(sw, 0.0, 0.0),
        edge_v=(0.0, sh, 0.0),
        texture_res=texture_res,
    )
    return SceneSpec(
        width=width,
        height=height,
        frames=frames,
        rects=[rect],
        camera=camera or CameraPathSpec(kind="static"),
    )


def orbit_scene(
    width: int = 640,
    height: int = 480,
    frames: int = 20,
    plane_z: float = 2.0,
    total_angle_deg: float = 12.0,
    radius: float = 2.0,
) -> SceneSpec:
    """Textured-plane orbit: camera circles the anchor point on the plane."""
    step = total_angle_deg / max(frames - 1, 1)
    camera = CameraPathSpec(
        kind="orbit",
        look_at=(0.0, 0.0, plane_z),
        radius=radius,
        angle_start_deg=-total_angle_deg / 2,
        angle_step_deg=step,
    )
    return plane_scene(
        width=width, height=height, frames=frames, plane_z=plane_z,
        plane_size=(8.0, 6.0), camera=camera, texture_res=128,
    )
