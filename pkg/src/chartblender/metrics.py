"""Pose-error and 3D point-tracking metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import LengthMismatch
from .geometry import RigidTransform

DEFAULT_APD3D_THRESHOLDS = (0.01, 0.02, 0.04, 0.08, 0.16)


@dataclass(frozen=True)
class PoseError:
    rotation_deg: float
    translation_m: float


@dataclass(frozen=True)
class Apd3dReport:
    score: float
    per_threshold: tuple[float, ...]
    thresholds: tuple[float, ...]


def pose_error(gt: RigidTransform, pred: RigidTransform) -> PoseError:
    """Angular error of gt^-1 * pred and Euclidean translation distance."""
    delta = gt.rotation.T @ pred.rotation
    cos_angle = np.clip((np.trace(delta) - 1.0) / 2.0, -1.0, 1.0)
    rotation_deg = float(np.degrees(np.arccos(cos_angle)))
    translation_m = float(np.linalg.norm(gt.translation - pred.translation))
    return PoseError(rotation_deg=rotation_deg, translation_m=translation_m)


def trajectory_errors(gt, pred) -> list[PoseError]:
    if len(gt) != len(pred):
        raise LengthMismatch(f"{len(gt)} ground-truth poses vs {len(pred)} predicted")
    return [pose_error(g, p) for g, p in zip(gt, pred)]


def apd3d(pred, gt, visible, thresholds=DEFAULT_APD3D_THRESHOLDS) -> Apd3dReport:
    """Fraction of visible (track, frame) samples within each distance
    threshold, averaged over thresholds.

    pred/gt: sequences of (N, 3) arrays, one per track; visible: (N,) bool
    masks on the ground truth. Invisible samples are excluded.
    """
    thresholds = tuple(float(t) for t in thresholds)
    if len(thresholds) == 0 or any(b <= a for a, b in zip(thresholds, thresholds[1:])):
        raise ValueError("thresholds must be strictly increasing and non-empty")
    if len(pred) != len(gt) or len(pred) != len(visible):
        raise LengthMismatch("pred, gt, and visible must have the same track count")
    errors = []
    for track_idx, (p, g, vis) in enumerate(zip(pred, gt, visible)):
        p = np.asarray(p, dtype=np.float64)
        g = np.asarray(g, dtype=np.float64)
        vis = np.asarray(vis, dtype=bool)
        if p.shape != g.shape or len(vis) != len(g):
            raise LengthMismatch(f"track {track_idx}: length mismatch")
        if vis.any():
            errors.append(np.linalg.norm(p[vis] - g[vis], axis=1))
    if not errors:
        raise ValueError("no visible ground-truth samples")
    all_errors = np.concatenate(errors)
    fractions = tuple(float(np.mean(all_errors < t)) for t in thresholds)
    return Apd3dReport(
        score=float(np.mean(fractions)), per_threshold=fractions, thresholds=thresholds
    )
