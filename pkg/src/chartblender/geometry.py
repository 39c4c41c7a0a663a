"""Pinhole camera model and SE(3) algebra.

Coordinate conventions (fixed across the whole package):

  Camera frame (standard computer vision, right-handed):
    x right, y down, z forward along the optical axis. Units: meters.

  Image frame:
    (u, v) pixels, origin at the top-left, u right, v down.

  World frame:
    Defined by the camera at frame 0: M_0 is the identity. A pose M_n is
    world-to-camera, i.e. x_cam = R @ x_world + t. World points render via
    project(apply(M_n, P)); world recovery uses the inverse pose.

Back-projection lifts a pixel plus metric depth via d * K^-1 [u, v, 1]^T,
where depth is the camera-frame z coordinate (not ray length).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import BehindCamera, NonPositiveDepth, PixelOutOfBounds

# Orthonormality drift beyond this triggers polar re-orthonormalization.
ORTHONORMALITY_EPS = 1e-9
# Construction-time tolerance for a valid rotation.
ROTATION_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ValueError("image size must be at least 1x1")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Intrinsics":
        return cls(
            fx=float(d["fx"]),
            fy=float(d["fy"]),
            cx=float(d["cx"]),
            cy=float(d["cy"]),
            width=int(d["width"]),
            height=int(d["height"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "Intrinsics":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_intrinsics(width: int, height: int) -> Intrinsics:
    """Moderate-FOV pinhole assumption for metadata-free video."""
    f = 0.9 * max(width, height)
    return Intrinsics(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)


def _orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Nearest rotation via polar projection (SVD)."""
    u, _, vt = np.linalg.svd(rotation)
    r = u @ vt
    if np.linalg.det(r) < 0:
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def _rotation_drift(rotation: np.ndarray) -> float:
    return float(np.abs(rotation.T @ rotation - np.eye(3)).max())


class RigidTransform:
    """SE(3) element: 3x3 rotation plus translation in meters.

    Immutable; the stored arrays are read-only views.
    """

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation, translation):
        r = np.asarray(rotation, dtype=np.float64).reshape(3, 3).copy()
        t = np.asarray(translation, dtype=np.float64).reshape(3).copy()
        drift = _rotation_drift(r)
        if drift > ROTATION_TOL or abs(np.linalg.det(r) - 1.0) > ROTATION_TOL:
            raise ValueError("rotation is not orthonormal with determinant +1")
        if drift > ORTHONORMALITY_EPS:
            r = _orthonormalize(r)
        if not np.all(np.isfinite(t)):
            raise ValueError("translation must be finite")
        r.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def __setattr__(self, name, value):
        raise AttributeError("RigidTransform is immutable")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "RigidTransform":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[:3, :3], m[:3, 3])

    def as_matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def apply(self, points) -> np.ndarray:
        """Transform one (3,) point or an (N, 3) batch."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def to_quaternion(self) -> np.ndarray:
        """Unit quaternion, w-first."""
        return _rotation_to_quaternion(self.rotation)

    @classmethod
    def from_quaternion(cls, quat, translation) -> "RigidTransform":
        return cls(_quaternion_to_rotation(np.asarray(quat, dtype=np.float64)), translation)

    def is_identity(self, atol: float = 1e-12) -> bool:
        return bool(
            np.allclose(self.rotation, np.eye(3), atol=atol)
            and np.allclose(self.translation, 0.0, atol=atol)
        )

    def __repr__(self):
        q = self.to_quaternion()
        return f"RigidTransform(q={np.round(q, 6).tolist()}, t={np.round(self.translation, 6).tolist()})"


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """Apply b first, then a (matrix product a @ b)."""
    r = a.rotation @ b.rotation
    t = a.rotation @ b.translation + a.translation
    if _rotation_drift(r) > ORTHONORMALITY_EPS:
        r = _orthonormalize(r)
    return RigidTransform(r, t)


def invert(t: RigidTransform) -> RigidTransform:
    r_inv = t.rotation.T
    return RigidTransform(r_inv, -(r_inv @ t.translation))


class CameraTrajectory:
    """Per-frame world-to-camera poses M_n; M_0 is the identity."""

    def __init__(self, poses: Sequence[RigidTransform]):
        poses = list(poses)
        if not poses:
            raise ValueError("trajectory needs at least one pose")
        if not poses[0].is_identity(atol=1e-9):
            raise ValueError("first pose must be the identity (frame 0 defines the world)")
        self.poses = poses

    @property
    def frame_count(self) -> int:
        return len(self.poses)

    def __len__(self):
        return len(self.poses)

    def __getitem__(self, n: int) -> RigidTransform:
        return self.poses[n]

    def __iter__(self):
        return iter(self.poses)

    def save_csv(self, path) -> None:
        """`frame,qw,qx,qy,qz,tx,ty,tz` with w-first unit quaternions."""
        save_poses_csv(self.poses, path)

    @classmethod
    def load_csv(cls, path) -> "CameraTrajectory":
        poses = load_poses_csv(path)
        if not poses[0].is_identity(atol=1e-6):
            raise ValueError("pose CSV row 0 must be the identity pose")
        # Snap row 0 so downstream invariants hold exactly.
        poses[0] = RigidTransform.identity()
        return cls(poses)


def save_poses_csv(poses: Sequence[RigidTransform], path) -> None:
    """Pose rows `frame,qw,qx,qy,qz,tx,ty,tz`, quaternions w-first."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz"])
        for n, pose in enumerate(poses):
            q = pose.to_quaternion()
            t = pose.translation
            writer.writerow(
                [n] + [format(v, ".17g") for v in (q[0], q[1], q[2], q[3], t[0], t[1], t[2])]
            )


def load_poses_csv(path) -> list[RigidTransform]:
    path = Path(path)
    poses: list[RigidTransform] = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != [
            "frame", "qw", "qx", "qy", "qz", "tx", "ty", "tz",
        ]:
            raise ValueError(f"bad pose CSV header in {path}")
        for expected, row in enumerate(reader):
            if int(row[0]) != expected:
                raise ValueError(f"pose CSV frames out of order at row {expected}")
            vals = [float(v) for v in row[1:]]
            q = np.array(vals[:4])
            q = q / np.linalg.norm(q)
            poses.append(RigidTransform.from_quaternion(q, vals[4:]))
    if not poses:
        raise ValueError(f"pose CSV {path} has no rows")
    return poses


def back_project(pixel, depth: float, k: Intrinsics) -> np.ndarray:
    """Lift a pixel plus depth into the camera frame: d * K^-1 [u, v, 1]^T."""
    u, v = float(pixel[0]), float(pixel[1])
    if not (math.isfinite(depth) and depth > 0):
        raise NonPositiveDepth(f"depth must be positive and finite, got {depth}")
    if not (0 <= u < k.width and 0 <= v < k.height):
        raise PixelOutOfBounds(f"pixel ({u}, {v}) outside {k.width}x{k.height} image")
    return np.array([depth * (u - k.cx) / k.fx, depth * (v - k.cy) / k.fy, depth])


def project(point, k: Intrinsics) -> np.ndarray:
    """Camera-frame point to pixel; may land outside image bounds (caller culls)."""
    x, y, z = (float(c) for c in point)
    if z <= 0:
        raise BehindCamera(f"point z={z} is behind the camera")
    return np.array([k.fx * x / z + k.cx, k.fy * y / z + k.cy])


def project_points(points: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Vectorized project() for an (N, 3) batch; caller guarantees z > 0."""
    p = np.asarray(points, dtype=np.float64)
    z = p[..., 2]
    return np.stack([k.fx * p[..., 0] / z + k.cx, k.fy * p[..., 1] / z + k.cy], axis=-1)


def back_project_pixels(pixels: np.ndarray, depths: np.ndarray, k: Intrinsics) -> np.ndarray:
    """Vectorized back_project() for (N, 2) pixels and (N,) depths."""
    px = np.asarray(pixels, dtype=np.float64)
    d = np.asarray(depths, dtype=np.float64)
    return np.stack(
        [d * (px[..., 0] - k.cx) / k.fx, d * (px[..., 1] - k.cy) / k.fy, d], axis=-1
    )


def chain_global_poses(relatives: Iterable[RigidTransform]) -> CameraTrajectory:
    """Accumulate relative poses T_{n->n+1} into world-to-camera poses M_n.

    M_0 = I and M_n = T_{n-1->n} @ M_{n-1}, so M_n maps world (frame-0 camera)
    coordinates into frame-n camera coordinates. Zero relatives yield a
    single-frame identity trajectory.
    """
    poses = [RigidTransform.identity()]
    for rel in relatives:
        poses.append(compose(rel, poses[-1]))
    return CameraTrajectory(poses)


def camera_to_world(point, m_n: RigidTransform) -> np.ndarray:
    """Frame-n camera coordinates to world coordinates (inverse pose)."""
    return invert(m_n).apply(np.asarray(point, dtype=np.float64))


def world_to_camera(point, m_n: RigidTransform) -> np.ndarray:
    return m_n.apply(np.asarray(point, dtype=np.float64))


def _rotation_to_quaternion(r: np.ndarray) -> np.ndarray:
    """W-first unit quaternion with non-negative w (Shepperd's method)."""
    m = r
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0:
        s = math.sqrt(trace + 1.0) * 2
        q = np.array(
            [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
        )
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = np.array(
            [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
        )
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = np.array(
            [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
        )
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = np.array(
            [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
        )
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def _quaternion_to_rotation(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation from a random quaternion."""
    q = rng.normal(size=4)
    return _quaternion_to_rotation(q / np.linalg.norm(q))
