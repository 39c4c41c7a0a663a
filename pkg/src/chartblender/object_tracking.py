"""Per-frame 3D object poses from a seed pixel.

Pipeline: 2D point tracking (builtin pyramidal template tracker or an
ingested track file), depth lifting with sliding-window quadratic
regression, second-order trajectory smoothing, and motion-aligned rotation
estimation. Object poses are expressed in per-frame camera coordinates;
the compositor consumes them without the camera trajectory.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse
from scipy.linalg import solveh_banded

from .camera_tracking import AnchorSpec
from .depth import DepthSequence, sample_depth
from .errors import (
    AllSamplesInvalid,
    IngestFormatError,
    LengthMismatch,
    NoValidDepth,
    SeedOutOfBounds,
)
from .geometry import Intrinsics, RigidTransform, back_project

# Floor applied to smoothed depth so lifted points keep z > 0.
MIN_SMOOTHED_DEPTH = 1e-6
# Match confidence below this marks the frame invisible (position held).
MIN_TRACK_CONFIDENCE = 0.5
TEMPLATE_REFRESH_INTERVAL = 15


@dataclass
class SmoothingConfig:
    """Weights for trajectory smoothing and depth regression.

    lambda_ is the acceleration penalty weight; mu anchors the solution to
    the observations (the two penalty terms alone are minimized by any
    constant trajectory). epsilon_v is the minimum speed in m/frame below
    which the rotation holds its previous value.
    """

    lambda_: float = 10.0
    mu: float = 10.0
    depth_window: int = 9
    epsilon_v: float = 0.005

    def __post_init__(self):
        if self.lambda_ < 0:
            raise ValueError("lambda must be >= 0")
        if self.mu <= 0:
            raise ValueError("mu must be > 0")
        if self.depth_window < 3 or self.depth_window % 2 == 0:
            raise ValueError("depth_window must be an odd integer >= 3")
        if self.epsilon_v < 0:
            raise ValueError("epsilon_v must be >= 0")

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "mu": self.mu,
            "depth_window": self.depth_window,
            "epsilon_v": self.epsilon_v,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothingConfig":
        return cls(
            lambda_=float(d.get("lambda", 10.0)),
            mu=float(d.get("mu", 10.0)),
            depth_window=int(d.get("depth_window", 9)),
            epsilon_v=float(d.get("epsilon_v", 0.005)),
        )


@dataclass
class Track2D:
    """Pixel trajectory with visibility; invisible frames hold the last visible position."""

    points: np.ndarray  # (N, 2) float64
    visible: np.ndarray  # (N,) bool
    seed: AnchorSpec

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        self.visible = np.asarray(self.visible, dtype=bool).reshape(-1)
        if len(self.points) != len(self.visible):
            raise LengthMismatch("track points and visibility lengths differ")

    def __len__(self):
        return len(self.points)

    def save_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "u", "v", "visible"])
            for n, ((u, v), vis) in enumerate(zip(self.points, self.visible)):
                writer.writerow([n, format(u, ".17g"), format(v, ".17g"), int(vis)])


def load_track_csv(path, seed: AnchorSpec | None = None) -> Track2D:
    """`frame,u,v,visible` rows covering frames 0..N-1 in order."""
    path = Path(path)
    points = []
    visible = []
    try:
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header] != ["frame", "u", "v", "visible"]:
                raise IngestFormatError(f"bad track CSV header in {path}")
            for expected, row in enumerate(reader):
                if len(row) != 4:
                    raise IngestFormatError(f"{path}: row {expected} has {len(row)} fields")
                if int(row[0]) != expected:
                    raise IngestFormatError(f"{path}: frames must be 0-based and contiguous")
                points.append((float(row[1]), float(row[2])))
                visible.append(bool(int(row[3])))
    except (ValueError, OSError) as exc:
        raise IngestFormatError(f"{path}: {exc}") from exc
    if not points:
        raise IngestFormatError(f"{path}: track file has no rows")
    if seed is None:
        first_visible = int(np.argmax(visible)) if any(visible) else 0
        seed = AnchorSpec(pixel=points[first_visible], frame=first_visible, mode="object")
    return Track2D(points=np.array(points), visible=np.array(visible), seed=seed)


@dataclass
class Trajectory3D:
    """Per-frame camera-frame points, meters."""

    points: np.ndarray  # (N, 3) float64
    smoothed: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("trajectory points must be finite")

    def __len__(self):
        return len(self.points)


@dataclass
class ObjectPoseSequence:
    poses: list[RigidTransform] = field(default_factory=list)

    def __len__(self):
        return len(self.poses)

    def __getitem__(self, n: int) -> RigidTransform:
        return self.poses[n]

    def __iter__(self):
        return iter(self.poses)


def _to_gray(frame: np.ndarray) -> np.ndarray:
    f = np.asarray(frame, dtype=np.float32)
    if f.ndim == 3:
        return f[..., 0] * 0.299 + f[..., 1] * 0.587 + f[..., 2] * 0.114
    return f


def _downsample2(img: np.ndarray) -> np.ndarray:
    h, w = img.shape
    h2, w2 = h - h % 2, w - w % 2
    v = img[:h2, :w2]
    return 0.25 * (v[0::2, 0::2] + v[1::2, 0::2] + v[0::2, 1::2] + v[1::2, 1::2])


def _extract_patch(img: np.ndarray, center, radius: int) -> np.ndarray | None:
    cx, cy = int(round(center[0])), int(round(center[1]))
    h, w = img.shape
    if cx - radius < 0 or cy - radius < 0 or cx + radius >= w or cy + radius >= h:
        return None
    return img[cy - radius : cy + radius + 1, cx - radius : cx + radius + 1]


def _ncc_search(img: np.ndarray, template: np.ndarray, center, search_radius: int):
    """Integer NCC peak near center plus parabolic sub-pixel refinement.

    Returns (position (2,), peak score) or None if the search window falls
    outside the image or is textureless.
    """
    pr = template.shape[0] // 2
    cx, cy = int(round(center[0])), int(round(center[1]))
    h, w = img.shape
    x0, x1 = cx - search_radius - pr, cx + search_radius + pr
    y0, y1 = cy - search_radius - pr, cy + search_radius + pr
    if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
        return None
    region = img[y0 : y1 + 1, x0 : x1 + 1]
    windows = np.lib.stride_tricks.sliding_window_view(region, template.shape)
    tz = template - template.mean()
    tnorm = np.sqrt((tz * tz).sum())
    if tnorm < 1e-6:
        return None
    # zero-mean template: window centering cancels in the numerator
    npix = template.size
    w_sum = np.einsum("ijkl->ij", windows)
    w_sumsq = np.einsum("ijkl,ijkl->ij", windows, windows)
    wnorm = np.sqrt(np.maximum(w_sumsq - w_sum * w_sum / npix, 0.0))
    scores = np.einsum("ijkl,kl->ij", windows, tz) / np.maximum(wnorm * tnorm, 1e-12)
    iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
    peak = float(scores[iy, ix])

    dx = dy = 0.0
    if 0 < ix < scores.shape[1] - 1:
        s_l, s_c, s_r = scores[iy, ix - 1], scores[iy, ix], scores[iy, ix + 1]
        denom = s_l - 2 * s_c + s_r
        if denom < -1e-12:
            dx = float(np.clip(0.5 * (s_l - s_r) / denom, -1, 1))
    if 0 < iy < scores.shape[0] - 1:
        s_u, s_c, s_d = scores[iy - 1, ix], scores[iy, ix], scores[iy + 1, ix]
        denom = s_u - 2 * s_c + s_d
        if denom < -1e-12:
            dy = float(np.clip(0.5 * (s_u - s_d) / denom, -1, 1))
    pos = np.array([x0 + ix + pr + dx, y0 + iy + pr + dy])
    return pos, peak


class _PyramidTracker:
    """3-level coarse-to-fine NCC template tracker with periodic refresh."""

    LEVELS = 3
    PATCH_RADII = (10, 7, 5)  # fine-to-coarse
    SEARCH_RADII = (3, 4, 8)

    def __init__(self, seed_frame_gray: np.ndarray, seed_pixel):
        self.position = np.asarray(seed_pixel, dtype=np.float64)
        self.templates = None
        self._refresh(seed_frame_gray, self.position)

    @staticmethod
    def _pyramid(gray: np.ndarray) -> list[np.ndarray]:
        levels = [gray]
        for _ in range(_PyramidTracker.LEVELS - 1):
            levels.append(_downsample2(levels[-1]))
        return levels

    def _refresh(self, gray: np.ndarray, position) -> bool:
        pyr = self._pyramid(gray)
        templates = []
        for level, radius in zip(pyr, self.PATCH_RADII):
            scale = gray.shape[1] / level.shape[1]
            patch = _extract_patch(level, position / scale, radius)
            if patch is None:
                return False
            templates.append(patch)
        self.templates = templates
        return True

    def step(self, gray: np.ndarray):
        """Track into the next frame. Returns (position, confidence, ok)."""
        pyr = self._pyramid(gray)
        pos = self.position.copy()
        confidence = 0.0
        for lvl in range(self.LEVELS - 1, -1, -1):
            scale = 2.0**lvl
            result = _ncc_search(
                pyr[lvl], self.templates[lvl], pos / scale, self.SEARCH_RADII[lvl]
            )
            if result is None:
                return self.position, 0.0, False
            level_pos, confidence = result
            pos = level_pos * scale
        return pos, confidence, True


def track_point_2d(frames, seed: AnchorSpec, mode: str = "builtin") -> Track2D:
    """One pixel position per frame, tracked from the seed.

    mode "builtin" runs the pyramidal template tracker forward and backward
    from the seed frame; "ingest:<path>" mirrors an external tracker's CSV.
    """
    if mode.startswith("ingest:"):
        track = load_track_csv(mode.split(":", 1)[1], seed=seed)
        return track
    if mode != "builtin":
        raise ValueError(f"unknown tracking mode {mode!r}")

    n_frames = len(frames)
    grays = [_to_gray(frames[n]) for n in range(n_frames)]
    h, w = grays[0].shape
    u, v = float(seed.pixel[0]), float(seed.pixel[1])
    if not (0 <= u < w and 0 <= v < h):
        raise SeedOutOfBounds(f"seed ({u}, {v}) outside {w}x{h} frames")
    if not (0 <= seed.frame < n_frames):
        raise SeedOutOfBounds(f"seed frame {seed.frame} outside 0..{n_frames - 1}")

    points = np.zeros((n_frames, 2))
    visible = np.zeros(n_frames, dtype=bool)
    points[seed.frame] = (u, v)
    visible[seed.frame] = True

    for direction in (1, -1):
        indices = (
            range(seed.frame + 1, n_frames) if direction == 1 else range(seed.frame - 1, -1, -1)
        )
        tracker = _PyramidTracker(grays[seed.frame], (u, v))
        lost = False
        last_visible_pos = np.array([u, v])
        since_refresh = 0
        for n in indices:
            if lost:
                points[n] = last_visible_pos
                visible[n] = False
                continue
            pos, confidence, ok = tracker.step(grays[n])
            if ok and confidence >= MIN_TRACK_CONFIDENCE:
                tracker.position = pos
                points[n] = pos
                visible[n] = True
                last_visible_pos = pos
                since_refresh += 1
                if since_refresh >= TEMPLATE_REFRESH_INTERVAL:
                    if tracker._refresh(grays[n], pos):
                        since_refresh = 0
            else:
                points[n] = last_visible_pos
                visible[n] = False
                lost = True  # no occlusion re-detection: hold from here on
    return Track2D(points=points, visible=visible, seed=seed)


def smooth_depth_quadratic(raw, window: int) -> np.ndarray:
    """Least-squares quadratic in time over a centered sliding window.

    The window truncates at the sequence ends (full-sequence fit when
    N < window). Invalid samples (<= 0) are excluded from each fit; a frame
    whose entire window is invalid raises AllSamplesInvalid.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 3")
    raw = np.asarray(raw, dtype=np.float64).reshape(-1)
    n = len(raw)
    if n == 0:
        raise ValueError("need at least one sample")
    half = window // 2
    valid = raw > 0
    out = np.empty(n)
    bad_frames = []
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        idx = np.nonzero(valid[lo:hi])[0] + lo
        if idx.size == 0:
            bad_frames.append(i)
            continue
        t = (idx - i).astype(np.float64)  # center time at the evaluated frame
        y = raw[idx]
        degree = min(2, idx.size - 1)
        cols = [np.ones_like(t)]
        if degree >= 1:
            cols.append(t)
        if degree >= 2:
            cols.append(t * t)
        a = np.stack(cols, axis=1)
        coef, *_ = np.linalg.lstsq(a, y, rcond=None)
        out[i] = max(coef[0], MIN_SMOOTHED_DEPTH)  # value at t = 0
    if bad_frames:
        raise AllSamplesInvalid((bad_frames[0], bad_frames[-1]))
    return out


def _smoothing_system_banded(n: int, mu: float, lam: float) -> np.ndarray:
    """Upper-banded form of mu*I + D1^T D1 + lam * D2^T D2 for solveh_banded."""
    eye = scipy.sparse.identity(n, format="csc")
    a = mu * eye
    if n >= 2:
        d1 = scipy.sparse.diags_array([-np.ones(n - 1), np.ones(n - 1)], offsets=[0, 1], shape=(n - 1, n))
        a = a + d1.T @ d1
    if n >= 3 and lam > 0:
        d2 = scipy.sparse.diags_array(
            [np.ones(n - 2), -2 * np.ones(n - 2), np.ones(n - 2)], offsets=[0, 1, 2], shape=(n - 2, n)
        )
        a = a + lam * (d2.T @ d2)
    a = a.tocsc()
    bandwidth = 2 if (n >= 3 and lam > 0) else (1 if n >= 2 else 0)
    ab = np.zeros((bandwidth + 1, n))
    dense_bands = a.todia()
    for offset, data in zip(dense_bands.offsets, dense_bands.data):
        if 0 <= offset <= bandwidth:
            ab[bandwidth - offset] = data
    return ab


def smoothing_objective(smoothed: np.ndarray, observed: np.ndarray, mu: float, lam: float) -> float:
    """mu*sum||X_n - P_n||^2 + sum||X_{n+1} - X_n||^2 + lam*sum||X_{n+2} - 2X_{n+1} + X_n||^2."""
    x = np.asarray(smoothed, dtype=np.float64)
    p = np.asarray(observed, dtype=np.float64)
    value = mu * np.sum((x - p) ** 2)
    if len(x) >= 2:
        value += np.sum(np.diff(x, axis=0) ** 2)
    if len(x) >= 3:
        value += lam * np.sum(np.diff(x, n=2, axis=0) ** 2)
    return float(value)


def smooth_sequence(values: np.ndarray, mu: float, lam: float) -> np.ndarray:
    """Minimize the second-order smoothing objective; banded SPD solve per column."""
    v = np.asarray(values, dtype=np.float64)
    squeeze = v.ndim == 1
    if squeeze:
        v = v[:, None]
    n = v.shape[0]
    if n == 1:
        out = v.copy()
    else:
        ab = _smoothing_system_banded(n, mu, lam)
        out = solveh_banded(ab, mu * v)
    return out[:, 0] if squeeze else out


def smooth_trajectory(traj: Trajectory3D, cfg: SmoothingConfig) -> Trajectory3D:
    smoothed = smooth_sequence(traj.points, cfg.mu, cfg.lambda_)
    return Trajectory3D(points=smoothed, smoothed=True)


def lift_track_to_3d(
    track: Track2D, depths: DepthSequence, k: Intrinsics, cfg: SmoothingConfig
) -> Trajectory3D:
    """Back-project the track with quadratic-smoothed per-frame depth."""
    n = len(track)
    if len(depths) != n:
        raise LengthMismatch(f"track has {n} frames, depth sequence has {len(depths)}")
    raw = np.zeros(n)
    for i in range(n):
        try:
            raw[i] = sample_depth(depths[i], track.points[i])
        except NoValidDepth:
            raw[i] = 0.0
    smoothed = smooth_depth_quadratic(raw, cfg.depth_window)
    points = np.stack(
        [back_project(track.points[i], smoothed[i], k) for i in range(n)]
    )
    return Trajectory3D(points=points, smoothed=False)


def _rotation_aligning_x(direction: np.ndarray) -> np.ndarray:
    """Minimal rotation taking the local x-axis onto the unit direction."""
    x = np.array([1.0, 0.0, 0.0])
    d = direction / np.linalg.norm(direction)
    c = float(np.clip(np.dot(x, d), -1.0, 1.0))
    if c > 1.0 - 1e-12:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        # antipodal: pick the z-axis as the (free) rotation axis
        return np.diag([-1.0, -1.0, 1.0])
    axis = np.cross(x, d)
    axis = axis / np.linalg.norm(axis)
    angle = np.arccos(c)
    kx, ky, kz = axis
    kmat = np.array([[0, -kz, ky], [kz, 0, -kx], [-ky, kx, 0]])
    return np.eye(3) + np.sin(angle) * kmat + (1 - np.cos(angle)) * (kmat @ kmat)


def estimate_rotations(traj: Trajectory3D, cfg: SmoothingConfig) -> list[np.ndarray]:
    """Per-frame rotations aligning the local x-axis with the smoothed velocity.

    The velocity sequence (last frame reuses the previous velocity) is
    smoothed with the same operator and weights as the trajectory; frames
    slower than epsilon_v hold the previous rotation (identity from rest).
    """
    points = traj.points
    n = len(points)
    if n == 1:
        return [np.eye(3)]
    velocities = np.empty_like(points)
    velocities[:-1] = np.diff(points, axis=0)
    velocities[-1] = velocities[-2]
    velocities = smooth_sequence(velocities, cfg.mu, cfg.lambda_)
    rotations: list[np.ndarray] = []
    prev = np.eye(3)
    for vel in velocities:
        speed = float(np.linalg.norm(vel))
        if speed >= cfg.epsilon_v:
            prev = _rotation_aligning_x(vel)
        rotations.append(prev)
    return rotations


def assemble_object_poses(traj: Trajectory3D, rotations) -> ObjectPoseSequence:
    if len(rotations) != len(traj):
        raise LengthMismatch(
            f"{len(rotations)} rotations for {len(traj)} trajectory points"
        )
    poses = [RigidTransform(r, p) for r, p in zip(rotations, traj.points)]
    return ObjectPoseSequence(poses=poses)


def solve_object_poses(
    track: Track2D, depths: DepthSequence, k: Intrinsics, cfg: SmoothingConfig | None = None
) -> ObjectPoseSequence:
    """Full object pipeline: lift, smooth, orient, assemble."""
    cfg = cfg or SmoothingConfig()
    lifted = lift_track_to_3d(track, depths, k, cfg)
    smoothed = smooth_trajectory(lifted, cfg)
    rotations = estimate_rotations(smoothed, cfg)
    return assemble_object_poses(smoothed, rotations)
