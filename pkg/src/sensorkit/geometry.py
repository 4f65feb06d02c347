"""Rigid-body poses and the shared value types used across the toolkit.

Conventions: right-handed coordinates everywhere; the vehicle frame has
+x forward, +y left, +z up. Quaternions are stored as (w, x, y, z) with
the Hamilton product and are renormalized on construction, which bounds
drift in long pose chains. All value types are immutable: array fields
are copied on construction and marked read-only, so instances are safe
to share between concurrent tasks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError

__all__ = [
    "RigidPose",
    "PointCloud",
    "ImagePlane",
    "freeze_array",
    "identity_pose",
    "compose_poses",
    "inverse_pose",
    "transform_point",
    "rotate_vector",
    "rotation_matrix",
    "quat_multiply",
    "quat_conjugate",
    "quat_from_axis_angle",
    "quat_from_matrix",
    "quat_angle",
]


def freeze_array(values, name: str, shape=None, dtype=np.float64) -> np.ndarray:
    """Copy values into a read-only array, checking shape and finiteness."""
    arr = np.array(values, dtype=dtype)
    if shape is not None and arr.shape != tuple(shape):
        raise ShapeError(f"{name}: expected shape {tuple(shape)}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: values must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RigidPose:
    """6-DoF rigid transform: unit quaternion (w, x, y, z) plus translation in meters.

    Applying a pose maps a point p to R @ p + t. The quaternion is
    renormalized on construction; a near-zero quaternion is rejected.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        quat = np.array(self.rotation, dtype=np.float64)
        if quat.shape != (4,):
            raise ShapeError(f"rotation: expected shape (4,), got {quat.shape}")
        if not np.all(np.isfinite(quat)):
            raise InvalidInputError("rotation: values must be finite")
        norm = float(np.linalg.norm(quat))
        if norm < 1e-12:
            raise InvalidInputError("rotation: quaternion norm is near zero")
        quat = quat / norm
        quat.setflags(write=False)
        object.__setattr__(self, "rotation", quat)
        object.__setattr__(
            self, "translation", freeze_array(self.translation, "translation", (3,))
        )


def identity_pose() -> RigidPose:
    return RigidPose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))


def quat_multiply(a, b) -> np.ndarray:
    """Hamilton product a * b."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ]
    )


def quat_conjugate(q) -> np.ndarray:
    w, x, y, z = q
    return np.array([w, -x, -y, -z])


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=np.float64)
    norm = np.linalg.norm(axis)
    if norm < 1e-12:
        raise InvalidInputError("axis: norm is near zero")
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / norm])


def quat_from_matrix(mat) -> np.ndarray:
    """Convert a 3x3 rotation matrix to a unit quaternion (Shepperd's method)."""
    m = np.asarray(mat, dtype=np.float64)
    if m.shape != (3, 3):
        raise ShapeError(f"matrix: expected shape (3, 3), got {m.shape}")
    trace = m[0, 0] + m[1, 1] + m[2, 2]
    if trace > 0.0:
        s = np.sqrt(trace + 1.0) * 2.0
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = np.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2.0
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = np.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2.0
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = np.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2.0
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.asarray(q)
    return q / np.linalg.norm(q)


def quat_angle(q) -> float:
    """Rotation angle in radians represented by quaternion q."""
    w, x, y, z = q
    return 2.0 * float(np.arctan2(np.linalg.norm([x, y, z]), abs(w)))


def rotation_matrix(q) -> np.ndarray:
    """3x3 rotation matrix for unit quaternion q = (w, x, y, z)."""
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array(
        [
            [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
            [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
            [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
        ]
    )


def compose_poses(a: RigidPose, b: RigidPose) -> RigidPose:
    """Compose two poses so that applying the result equals applying b then a."""
    rotation = quat_multiply(a.rotation, b.rotation)
    translation = rotation_matrix(a.rotation) @ b.translation + a.translation
    return RigidPose(rotation, translation)


def inverse_pose(p: RigidPose) -> RigidPose:
    conj = quat_conjugate(p.rotation)
    return RigidPose(conj, -(rotation_matrix(conj) @ p.translation))


def transform_point(pose: RigidPose, p) -> np.ndarray:
    """Apply the pose to one point or a batch of points with shape (..., 3)."""
    pts = np.asarray(p, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise ShapeError(f"points: expected trailing dimension 3, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("points: values must be finite")
    return pts @ rotation_matrix(pose.rotation).T + pose.translation


def rotate_vector(pose: RigidPose, v) -> np.ndarray:
    """Rotate one vector or a batch of vectors with shape (..., 3), ignoring translation."""
    vec = np.asarray(v, dtype=np.float64)
    if vec.shape[-1] != 3:
        raise ShapeError(f"vectors: expected trailing dimension 3, got {vec.shape}")
    return vec @ rotation_matrix(pose.rotation).T


@dataclass(frozen=True)
class PointCloud:
    """Points in the vehicle frame with per-point intensity and elongation in [0, 1]."""

    points: np.ndarray
    intensity: np.ndarray
    elongation: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("points: coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        n = pts.shape[0]
        for name in ("intensity", "elongation"):
            arr = freeze_array(getattr(self, name), name, (n,))
            if n and (arr.min() < 0.0 or arr.max() > 1.0):
                raise InvalidInputError(f"{name}: values must lie in [0, 1]")
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.points.shape[0]

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0), np.zeros(0))


@dataclass(frozen=True)
class ImagePlane:
    """Row-major scalar grid with shape (height, width, channels).

    Photometric channels are expected in [0, 1]; non-photometric planes
    (depth, for instance) only need to be finite.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise ShapeError(f"data: expected 3 dimensions (H, W, C), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("data: values must be finite")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @classmethod
    def filled(cls, height: int, width: int, channels: int, value: float = 0.0) -> "ImagePlane":
        return cls(np.full((height, width, channels), value, dtype=np.float64))
