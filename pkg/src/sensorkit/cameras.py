"""Camera projection models and raymap generation.

Two lens models are supported: a pinhole with Brown radial/tangential
distortion and an equidistant fisheye with a theta polynomial. The camera
frame has +z along the optical axis, +x right, +y down. Continuous pixel
coordinates put (0, 0) at the corner of the top-left pixel, so the center
of pixel (row i, col j) is (u, v) = (j + 0.5, i + 0.5).

Distortion is inverted by damped fixed-point iteration (damping 0.7, at
most 50 iterations, convergence 1e-10 in normalized coordinates); a
residual above tolerance raises rather than returning a bad ray.

Raymaps store a per-pixel ray origin and unit direction expressed in a
reference camera's frame with no scale normalization applied to the
translations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericError, ProjectionError, ShapeError
from .geometry import (
    RigidPose,
    compose_poses,
    freeze_array,
    inverse_pose,
    quat_from_matrix,
    quat_from_axis_angle,
    quat_multiply,
    rotation_matrix,
)

__all__ = [
    "MODEL_PINHOLE",
    "MODEL_FISHEYE",
    "CameraIntrinsics",
    "Raymap",
    "project",
    "unproject",
    "make_raymap",
    "pixel_centers",
    "scale_intrinsics",
    "camera_alignment_quat",
    "make_camera_ring",
]

MODEL_PINHOLE = "pinhole_brown"
MODEL_FISHEYE = "fisheye_equidistant"

_MAX_ITER = 50
_TOL = 1e-10
_DAMPING = 0.7


@dataclass(frozen=True)
class CameraIntrinsics:
    """Lens model with focal lengths, principal point, and distortion k1..k3, p1, p2."""

    model: str
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    k1: float = 0.0
    k2: float = 0.0
    k3: float = 0.0
    p1: float = 0.0
    p2: float = 0.0

    def __post_init__(self):
        if self.model not in (MODEL_PINHOLE, MODEL_FISHEYE):
            raise InvalidInputError(f"unknown camera model {self.model!r}")
        if not (self.fx > 0.0 and self.fy > 0.0):
            raise InvalidInputError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise InvalidInputError("image size must be at least 1x1")
        if not (0.0 <= self.cx < self.width and 0.0 <= self.cy < self.height):
            raise InvalidInputError("principal point must lie inside the image")
        if self.model == MODEL_FISHEYE and (self.p1 != 0.0 or self.p2 != 0.0):
            raise InvalidInputError("fisheye model does not take tangential terms")


@dataclass(frozen=True)
class Raymap:
    """Per-pixel ray origins and unit directions in the reference camera frame."""

    origins: np.ndarray
    directions: np.ndarray

    def __post_init__(self):
        origins = freeze_array(self.origins, "origins")
        directions = freeze_array(self.directions, "directions")
        if origins.ndim != 3 or origins.shape[2] != 3:
            raise ShapeError(f"origins: expected shape (H, W, 3), got {origins.shape}")
        if directions.shape != origins.shape:
            raise ShapeError("directions: shape must match origins")
        norms = np.linalg.norm(directions, axis=-1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("directions must be unit vectors")
        object.__setattr__(self, "origins", origins)
        object.__setattr__(self, "directions", directions)

    @property
    def height(self) -> int:
        return self.origins.shape[0]

    @property
    def width(self) -> int:
        return self.origins.shape[1]


def _distort_pinhole(intr: CameraIntrinsics, xy: np.ndarray) -> np.ndarray:
    x, y = xy[..., 0], xy[..., 1]
    r2 = x * x + y * y
    radial = 1.0 + r2 * (intr.k1 + r2 * (intr.k2 + r2 * intr.k3))
    xd = x * radial + 2.0 * intr.p1 * x * y + intr.p2 * (r2 + 2.0 * x * x)
    yd = y * radial + intr.p1 * (r2 + 2.0 * y * y) + 2.0 * intr.p2 * x * y
    return np.stack([xd, yd], axis=-1)


def _theta_poly(intr: CameraIntrinsics, theta: np.ndarray) -> np.ndarray:
    t2 = theta * theta
    return theta * (1.0 + t2 * (intr.k1 + t2 * (intr.k2 + t2 * intr.k3)))


def project(intr: CameraIntrinsics, p_cam) -> np.ndarray:
    """Project camera-frame points (..., 3) to pixel coordinates (..., 2)."""
    pts = np.asarray(p_cam, dtype=np.float64)
    if pts.shape[-1] != 3:
        raise ShapeError(f"points: expected trailing dimension 3, got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("points: values must be finite")
    x, y, z = pts[..., 0], pts[..., 1], pts[..., 2]

    if intr.model == MODEL_PINHOLE:
        if np.any(z <= 0.0):
            raise ProjectionError("point behind the pinhole camera (z <= 0)")
        xy = np.stack([x / z, y / z], axis=-1)
        dist = _distort_pinhole(intr, xy)
    else:
        r_xy = np.hypot(x, y)
        on_axis = r_xy < 1e-12
        if np.any(on_axis & (z <= 0.0)):
            raise ProjectionError("point on the backward optical axis")
        theta = np.arctan2(r_xy, z)
        theta_d = _theta_poly(intr, theta)
        scale = np.where(on_axis, 0.0, theta_d / np.maximum(r_xy, 1e-300))
        dist = np.stack([x * scale, y * scale], axis=-1)

    u = intr.fx * dist[..., 0] + intr.cx
    v = intr.fy * dist[..., 1] + intr.cy
    return np.stack([u, v], axis=-1)


def unproject(intr: CameraIntrinsics, pixel) -> np.ndarray:
    """Unit ray directions (..., 3) whose projection lands on the given pixels."""
    px = np.asarray(pixel, dtype=np.float64)
    if px.shape[-1] != 2:
        raise ShapeError(f"pixels: expected trailing dimension 2, got {px.shape}")
    mx = (px[..., 0] - intr.cx) / intr.fx
    my = (px[..., 1] - intr.cy) / intr.fy

    if intr.model == MODEL_PINHOLE:
        target = np.stack([mx, my], axis=-1)
        guess = target.copy()
        # Divergence shows up as a large/NaN residual and is raised below.
        with np.errstate(over="ignore", invalid="ignore"):
            for _ in range(_MAX_ITER):
                residual = target - _distort_pinhole(intr, guess)
                if np.max(np.abs(residual)) < _TOL:
                    break
                guess = guess + _DAMPING * residual
            residual = np.max(np.abs(target - _distort_pinhole(intr, guess)))
        if not residual < _TOL:  # also catches NaN from a diverged iteration
            raise NumericError(
                "distortion inversion did not converge", residual=float(residual)
            )
        dirs = np.concatenate([guess, np.ones(guess.shape[:-1] + (1,))], axis=-1)
        return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)

    theta_d = np.hypot(mx, my)
    theta = theta_d.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(_MAX_ITER):
            residual = theta_d - _theta_poly(intr, theta)
            if np.max(np.abs(residual)) < _TOL:
                break
            theta = theta + _DAMPING * residual
        residual = np.max(np.abs(theta_d - _theta_poly(intr, theta)))
    if not residual < _TOL:
        raise NumericError(
            "fisheye angle inversion did not converge", residual=float(residual)
        )
    safe = np.maximum(theta_d, 1e-300)
    ax = np.where(theta_d < 1e-12, 0.0, mx / safe)
    ay = np.where(theta_d < 1e-12, 0.0, my / safe)
    sin_t = np.sin(theta)
    return np.stack([sin_t * ax, sin_t * ay, np.cos(theta)], axis=-1)


def pixel_centers(intr: CameraIntrinsics, downsample: int = 1) -> np.ndarray:
    """(H/d, W/d, 2) grid of pixel-center coordinates in full-resolution units."""
    if downsample < 1:
        raise InvalidInputError("downsample must be >= 1")
    if intr.width % downsample or intr.height % downsample:
        raise InvalidInputError(
            f"downsample {downsample} must divide {intr.width}x{intr.height}"
        )
    w, h = intr.width // downsample, intr.height // downsample
    u = (np.arange(w) + 0.5) * downsample
    v = (np.arange(h) + 0.5) * downsample
    uu, vv = np.meshgrid(u, v)
    return np.stack([uu, vv], axis=-1)


def make_raymap(
    target: tuple[CameraIntrinsics, RigidPose],
    reference_pose: RigidPose,
    downsample: int = 1,
) -> Raymap:
    """Raymap of the target camera expressed in the reference camera's frame.

    Rays are regenerated at the coarse grid's pixel centers rather than
    averaged, so directions stay unit-norm at any downsample factor.
    """
    intr, target_pose = target
    grid = pixel_centers(intr, downsample)
    dirs_cam = unproject(intr, grid)
    relative = compose_poses(inverse_pose(reference_pose), target_pose)
    rot = rotation_matrix(relative.rotation)
    dirs = dirs_cam @ rot.T
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    origins = np.broadcast_to(relative.translation, dirs.shape).copy()
    return Raymap(origins, dirs)


def scale_intrinsics(intr: CameraIntrinsics, width: int, height: int) -> CameraIntrinsics:
    """Rescale the model to a new image size (corner-anchored pixel grid)."""
    sx, sy = width / intr.width, height / intr.height
    return CameraIntrinsics(
        model=intr.model,
        fx=intr.fx * sx,
        fy=intr.fy * sy,
        cx=intr.cx * sx,
        cy=intr.cy * sy,
        width=width,
        height=height,
        k1=intr.k1,
        k2=intr.k2,
        k3=intr.k3,
        p1=intr.p1,
        p2=intr.p2,
    )


def camera_alignment_quat() -> np.ndarray:
    """Quaternion mapping camera axes (+z forward, +x right, +y down) into the
    vehicle frame (+x forward, +y left, +z up) for a forward-looking camera."""
    return quat_from_matrix(
        np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    )


def make_camera_ring(
    n_views: int = 8,
    width: int = 256,
    height: int = 256,
    mount_height: float = 2.0,
) -> list[tuple[CameraIntrinsics, RigidPose]]:
    """Evenly yawed pinhole ring centered on the vehicle, first view forward."""
    intr = CameraIntrinsics(
        model=MODEL_PINHOLE,
        fx=0.6 * width,
        fy=0.6 * width,
        cx=width / 2.0,
        cy=height / 2.0,
        width=width,
        height=height,
    )
    base = camera_alignment_quat()
    ring = []
    for i in range(n_views):
        yaw = quat_from_axis_angle([0.0, 0.0, 1.0], 2.0 * np.pi * i / n_views)
        pose = RigidPose(quat_multiply(yaw, base), np.array([0.0, 0.0, mount_height]))
        ring.append((intr, pose))
    return ring
