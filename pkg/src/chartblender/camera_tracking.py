"""RGBD odometry: relative poses between consecutive frames, global
trajectory chaining, and world-space recovery of a clicked static anchor.

Relative poses come from sparse corner features matched by normalized
cross-correlation, lifted to 3D with each frame's depth, and robustly
aligned with a closed-form SVD rigid fit inside a RANSAC loop. Precomputed
trajectories (pose CSV) can be ingested instead, bypassing this solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from .depth import DepthMap, DepthSequence, sample_depth
from .errors import (
    DegenerateGeometry,
    InsufficientCorrespondences,
    NoValidDepth,
    PixelOutOfBounds,
    TrackingFailed,
)
from .geometry import (
    CameraTrajectory,
    Intrinsics,
    RigidTransform,
    back_project,
    camera_to_world,
    chain_global_poses,
)

PATCH_RADIUS = 6
MIN_MATCH_NCC = 0.5
# Fraction of pixels that must carry valid depth for odometry to run.
MIN_VALID_DEPTH_FRACTION = 0.10


@dataclass
class OdometryConfig:
    max_features: int = 300
    search_radius_px: int = 24
    ransac_iters: int = 500
    inlier_thresh_m: float = 0.02
    min_inliers: int = 12
    seed: int = 0
    on_failure: str = "hold-previous-relative"  # or "abort"

    def __post_init__(self):
        if self.on_failure not in ("hold-previous-relative", "abort"):
            raise ValueError(f"unknown failure policy {self.on_failure!r}")

    def to_dict(self) -> dict:
        return {
            "max_features": self.max_features,
            "search_radius_px": self.search_radius_px,
            "ransac_iters": self.ransac_iters,
            "inlier_thresh_m": self.inlier_thresh_m,
            "min_inliers": self.min_inliers,
            "seed": self.seed,
            "on_failure": self.on_failure,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OdometryConfig":
        return cls(
            max_features=int(d.get("max_features", 300)),
            search_radius_px=int(d.get("search_radius_px", 24)),
            ransac_iters=int(d.get("ransac_iters", 500)),
            inlier_thresh_m=float(d.get("inlier_thresh_m", 0.02)),
            min_inliers=int(d.get("min_inliers", 12)),
            seed=int(d.get("seed", 0)),
            on_failure=str(d.get("on_failure", "hold-previous-relative")),
        )


@dataclass
class RgbdFrame:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: DepthMap
    index: int = 0

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise ValueError("rgb must be (H, W, 3)")
        if self.rgb.shape[:2] != (self.depth.height, self.depth.width):
            raise ValueError("rgb and depth dimensions must match")


@dataclass
class AnchorSpec:
    """User-clicked tracking anchor."""

    pixel: tuple[float, float]
    frame: int = 0
    mode: str = "camera"  # camera | object

    def __post_init__(self):
        if self.mode not in ("camera", "object"):
            raise ValueError(f"unknown anchor mode {self.mode!r}")
        self.pixel = (float(self.pixel[0]), float(self.pixel[1]))

    def to_dict(self) -> dict:
        return {"pixel": [self.pixel[0], self.pixel[1]], "frame": self.frame, "mode": self.mode}

    @classmethod
    def from_dict(cls, d: dict) -> "AnchorSpec":
        return cls(pixel=tuple(d["pixel"]), frame=int(d.get("frame", 0)), mode=d.get("mode", "camera"))


@dataclass
class AnchorWorldPose:
    position: np.ndarray  # (3,) world, meters
    orientation: np.ndarray  # (3, 3) world rotation

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64).reshape(3)
        self.orientation = np.asarray(self.orientation, dtype=np.float64).reshape(3, 3)
        if not np.all(np.isfinite(self.position)):
            raise ValueError("anchor position must be finite")


def _to_gray(rgb: np.ndarray) -> np.ndarray:
    f = rgb.astype(np.float32)
    return f[..., 0] * 0.299 + f[..., 1] * 0.587 + f[..., 2] * 0.114


def detect_corners(gray: np.ndarray, max_features: int, margin: int) -> np.ndarray:
    """Shi-Tomasi corners: min eigenvalue of the smoothed structure tensor,
    non-max suppressed, strongest first. Returns (N, 2) integer (u, v)."""
    gx = ndimage.sobel(gray, axis=1, mode="nearest") / 8.0
    gy = ndimage.sobel(gray, axis=0, mode="nearest") / 8.0
    sxx = ndimage.gaussian_filter(gx * gx, sigma=1.5, mode="nearest")
    syy = ndimage.gaussian_filter(gy * gy, sigma=1.5, mode="nearest")
    sxy = ndimage.gaussian_filter(gx * gy, sigma=1.5, mode="nearest")
    trace = sxx + syy
    disc = np.sqrt(np.maximum((sxx - syy) ** 2 + 4 * sxy * sxy, 0.0))
    score = 0.5 * (trace - disc)

    peak = float(score.max(initial=0.0))
    if peak <= 1e-3:  # textureless frame
        return np.empty((0, 2), dtype=np.int64)
    local_max = score == ndimage.maximum_filter(score, size=9, mode="constant")
    mask = local_max & (score > 0.01 * peak)
    mask[:margin, :] = False
    mask[-margin:, :] = False
    mask[:, :margin] = False
    mask[:, -margin:] = False
    vs, us = np.nonzero(mask)
    if len(us) == 0:
        return np.empty((0, 2), dtype=np.int64)
    order = np.argsort(score[vs, us])[::-1][:max_features]
    return np.stack([us[order], vs[order]], axis=1)


def _ncc_match(gray_b: np.ndarray, template: np.ndarray, center, search_radius: int):
    """Best NCC offset of template within the search window around center.

    Returns (matched position (2,), score) with parabolic sub-pixel
    refinement, or None when the window leaves the image or is flat.
    """
    pr = template.shape[0] // 2
    cx, cy = int(round(center[0])), int(round(center[1]))
    h, w = gray_b.shape
    x0, x1 = cx - search_radius - pr, cx + search_radius + pr
    y0, y1 = cy - search_radius - pr, cy + search_radius + pr
    if x0 < 0 or y0 < 0 or x1 >= w or y1 >= h:
        return None
    region = gray_b[y0 : y1 + 1, x0 : x1 + 1]
    windows = np.lib.stride_tricks.sliding_window_view(region, template.shape)
    tz = template - template.mean()
    tnorm = np.sqrt((tz * tz).sum())
    if tnorm < 1e-6:
        return None
    # zero-mean template: (w - w_mean) . tz == w . tz, so skip centering w
    npix = template.size
    w_sum = np.einsum("ijkl->ij", windows)
    w_sumsq = np.einsum("ijkl,ijkl->ij", windows, windows)
    wnorm = np.sqrt(np.maximum(w_sumsq - w_sum * w_sum / npix, 0.0))
    numer = np.einsum("ijkl,kl->ij", windows, tz)
    scores = numer / np.maximum(wnorm * tnorm, 1e-12)
    iy, ix = np.unravel_index(int(np.argmax(scores)), scores.shape)
    peak = float(scores[iy, ix])
    dx = dy = 0.0
    if 0 < ix < scores.shape[1] - 1:
        denom = scores[iy, ix - 1] - 2 * scores[iy, ix] + scores[iy, ix + 1]
        if denom < -1e-12:
            dx = float(np.clip(0.5 * (scores[iy, ix - 1] - scores[iy, ix + 1]) / denom, -1, 1))
    if 0 < iy < scores.shape[0] - 1:
        denom = scores[iy - 1, ix] - 2 * scores[iy, ix] + scores[iy + 1, ix]
        if denom < -1e-12:
            dy = float(np.clip(0.5 * (scores[iy - 1, ix] - scores[iy + 1, ix]) / denom, -1, 1))
    return np.array([x0 + pr + ix + dx, y0 + pr + iy + dy]), peak


def _bilinear_patch(img: np.ndarray, center, radius: int) -> np.ndarray | None:
    """Patch sampled at a sub-pixel center; None if it leaves the image."""
    h, w = img.shape
    cx, cy = float(center[0]), float(center[1])
    if cx - radius < 0 or cy - radius < 0 or cx + radius > w - 1 or cy + radius > h - 1:
        return None
    offs = np.arange(-radius, radius + 1, dtype=np.float64)
    xs = cx + offs
    ys = cy + offs
    x0 = np.floor(xs).astype(int)
    y0 = np.floor(ys).astype(int)
    fx = xs - x0
    fy = ys - y0
    x0 = np.clip(x0, 0, w - 2)
    y0 = np.clip(y0, 0, h - 2)
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x0 + 1)]
    c = img[np.ix_(y0 + 1, x0)]
    d = img[np.ix_(y0 + 1, x0 + 1)]
    wx = fx[None, :]
    wy = fy[:, None]
    return (
        a * (1 - wx) * (1 - wy) + b * wx * (1 - wy) + c * (1 - wx) * wy + d * wx * wy
    )


def _refine_translation_lk(gray_b, template, position, iterations: int = 8):
    """Zero-mean Lucas-Kanade translation refinement at sub-pixel accuracy."""
    radius = template.shape[0] // 2
    tz = template - template.mean()
    gy, gx = np.gradient(template)
    h11 = float((gx * gx).sum())
    h12 = float((gx * gy).sum())
    h22 = float((gy * gy).sum())
    det = h11 * h22 - h12 * h12
    if det < 1e-9:
        return position
    pos = np.asarray(position, dtype=np.float64).copy()
    for _ in range(iterations):
        patch = _bilinear_patch(gray_b, pos, radius)
        if patch is None:
            break
        err = (patch - patch.mean()) - tz
        b1 = float((gx * err).sum())
        b2 = float((gy * err).sum())
        du = (h22 * b1 - h12 * b2) / det
        dv = (h11 * b2 - h12 * b1) / det
        pos[0] -= du
        pos[1] -= dv
        if abs(du) < 1e-4 and abs(dv) < 1e-4:
            break
    return pos


def _kabsch(src: np.ndarray, dst: np.ndarray) -> RigidTransform:
    """Closed-form rigid fit minimizing ||R src + t - dst||^2 (SVD)."""
    c_src = src.mean(axis=0)
    c_dst = dst.mean(axis=0)
    h = (src - c_src).T @ (dst - c_dst)
    u, _, vt = np.linalg.svd(h)
    d = np.sign(np.linalg.det(vt.T @ u.T))
    r = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    t = c_dst - r @ c_src
    return RigidTransform(r, t)


def match_correspondences(a: RgbdFrame, b: RgbdFrame, k: Intrinsics, cfg: OdometryConfig):
    """3D correspondence sets (P_a, P_b) in each frame's camera coordinates."""
    gray_a = _to_gray(a.rgb)
    gray_b = _to_gray(b.rgb)
    margin = PATCH_RADIUS + cfg.search_radius_px + 1
    corners = detect_corners(gray_a, cfg.max_features, margin)
    pts_a = []
    pts_b = []
    for u, v in corners:
        template = gray_a[v - PATCH_RADIUS : v + PATCH_RADIUS + 1, u - PATCH_RADIUS : u + PATCH_RADIUS + 1]
        match = _ncc_match(gray_b, template, (u, v), cfg.search_radius_px)
        if match is None or match[1] < MIN_MATCH_NCC:
            continue
        pos_b = _refine_translation_lk(gray_b, template, match[0])
        try:
            da = sample_depth(a.depth, (float(u), float(v)))
            db = sample_depth(b.depth, (float(pos_b[0]), float(pos_b[1])))
        except (NoValidDepth, PixelOutOfBounds):
            continue
        pts_a.append(back_project((float(u), float(v)), da, k))
        pts_b.append(back_project((float(pos_b[0]), float(pos_b[1])), db, k))
    if not pts_a:
        return np.empty((0, 3)), np.empty((0, 3))
    return np.stack(pts_a), np.stack(pts_b)


def _ransac_rigid(pts_a: np.ndarray, pts_b: np.ndarray, cfg: OdometryConfig) -> RigidTransform:
    n = len(pts_a)
    if n < max(3, cfg.min_inliers):
        raise InsufficientCorrespondences(n, max(3, cfg.min_inliers))
    rng = np.random.default_rng(cfg.seed)
    best_inliers = None
    best_count = -1
    thresh_sq = cfg.inlier_thresh_m**2
    for _ in range(cfg.ransac_iters):
        idx = rng.choice(n, size=3, replace=False)
        sample_a = pts_a[idx]
        sample_b = pts_b[idx]
        # reject near-collinear samples: rotation would be unconstrained
        cross = np.cross(sample_a[1] - sample_a[0], sample_a[2] - sample_a[0])
        if np.linalg.norm(cross) < 1e-10:
            continue
        model = _kabsch(sample_a, sample_b)
        residual = pts_a @ model.rotation.T + model.translation - pts_b
        inliers = np.einsum("ij,ij->i", residual, residual) < thresh_sq
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_inliers = inliers
    if best_inliers is None or best_count < 3:
        raise InsufficientCorrespondences(max(best_count, 0), cfg.min_inliers)
    model = _kabsch(pts_a[best_inliers], pts_b[best_inliers])
    residual = pts_a @ model.rotation.T + model.translation - pts_b
    inliers = np.einsum("ij,ij->i", residual, residual) < thresh_sq
    count = int(inliers.sum())
    if count < cfg.min_inliers:
        raise InsufficientCorrespondences(count, cfg.min_inliers)
    inlier_a = pts_a[inliers]
    singulars = np.linalg.svd(inlier_a - inlier_a.mean(axis=0), compute_uv=False)
    if singulars[1] < 1e-3 * max(singulars[0], 1e-12):
        raise DegenerateGeometry("inlier set is near-collinear")
    return _kabsch(inlier_a, pts_b[inliers])


def estimate_relative_pose(
    a: RgbdFrame, b: RgbdFrame, k: Intrinsics, cfg: OdometryConfig | None = None
) -> RigidTransform:
    """T_{a->b}: maps frame-a camera coordinates to frame-b camera coordinates."""
    cfg = cfg or OdometryConfig()
    if a.rgb.shape != b.rgb.shape:
        raise ValueError("frames must share dimensions")
    if a.depth.valid_fraction() < MIN_VALID_DEPTH_FRACTION:
        raise InsufficientCorrespondences(0, cfg.min_inliers)
    pts_a, pts_b = match_correspondences(a, b, k, cfg)
    return _ransac_rigid(pts_a, pts_b, cfg)


def solve_camera_trajectory(
    frames: Sequence[RgbdFrame],
    k: Intrinsics,
    cfg: OdometryConfig | None = None,
    threads: int = 1,
) -> CameraTrajectory:
    """Estimate all consecutive relative poses and chain them into M_n.

    Pair estimates are independent and run on a thread pool when
    threads > 1 (results are collected by pair index, so the trajectory is
    identical to the sequential one). A failing pair follows
    cfg.on_failure: hold-previous-relative reuses the last successful
    relative (identity if none yet); abort raises TrackingFailed(n).
    """
    cfg = cfg or OdometryConfig()
    if len(frames) == 0:
        raise ValueError("need at least one frame")
    n_pairs = len(frames) - 1

    def estimate(n):
        try:
            return estimate_relative_pose(frames[n], frames[n + 1], k, cfg)
        except (InsufficientCorrespondences, DegenerateGeometry) as exc:
            return exc

    if threads > 1 and n_pairs > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(estimate, range(n_pairs)))
    else:
        results = [estimate(n) for n in range(n_pairs)]

    relatives: list[RigidTransform] = []
    last_good = RigidTransform.identity()
    for n, result in enumerate(results):
        if isinstance(result, RigidTransform):
            last_good = result
            relatives.append(result)
        else:
            if cfg.on_failure == "abort":
                raise TrackingFailed(n, f"pair {n}->{n + 1}: {result}") from result
            relatives.append(last_good)
    return chain_global_poses(relatives)


def recover_anchor_world_pose(
    anchor: AnchorSpec,
    depths: DepthSequence,
    traj: CameraTrajectory,
    k: Intrinsics,
) -> AnchorWorldPose:
    """Back-project the clicked pixel at its frame and lift it to world space.

    Orientation starts as the identity (chart faces the frame-0 camera);
    the author refines it interactively.
    """
    if anchor.mode != "camera":
        raise ValueError("anchor must be in camera mode")
    depth = sample_depth(depths[anchor.frame], anchor.pixel)
    cam_point = back_project(anchor.pixel, depth, k)
    position = camera_to_world(cam_point, traj[anchor.frame])
    return AnchorWorldPose(position=position, orientation=np.eye(3))
