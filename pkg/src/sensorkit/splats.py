"""Ray-traced rendering of Gaussian-splat scenes through arbitrary cameras.

A scene is a set of static 3D Gaussians plus rigid objects whose canonical
splats are posed per integer timestep. Each ray evaluates every splat at
the single parameter value where the Gaussian density peaks along the ray,
then composites the surviving responses front to back:

    color = sum_i alpha_i * c_i * prod_{j<i} (1 - alpha_j)

Depth is the mean of the peak distances weighted by the same compositing
weights. Responses with alpha <= 1e-4 are ignored and a ray stops once
its remaining transmittance falls below 1e-3; pixels whose accumulated
weight stays below 1e-3 take the scene background color and depth 0 as a
no-hit marker. Splats are sorted by peak distance with a stable tie-break
on splat index, so rendering does not depend on input list order.

Rendering is pure and data-parallel over pixels; concurrent renders of
one scene are safe because scenes are immutable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import CameraIntrinsics, pixel_centers, unproject
from .errors import InvalidInputError, TimeRangeError
from .geometry import (
    ImagePlane,
    RigidPose,
    freeze_array,
    quat_multiply,
    rotation_matrix,
    rotate_vector,
    transform_point,
)

__all__ = [
    "Gaussian3D",
    "SceneObject",
    "GaussianScene",
    "instantiate",
    "ray_gaussian_response",
    "composite_rays",
    "render",
]

ALPHA_CUTOFF = 1e-4
MIN_TRANSMITTANCE = 1e-3


@dataclass(frozen=True)
class Gaussian3D:
    """Anisotropic 3D Gaussian: mean, per-axis scale, orientation, opacity, color."""

    mean: np.ndarray
    scale: np.ndarray
    orientation: np.ndarray
    opacity: float
    color: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", freeze_array(self.mean, "mean", (3,)))
        scale = freeze_array(self.scale, "scale", (3,))
        if np.any(scale <= 0.0):
            raise InvalidInputError("scale: components must be positive")
        object.__setattr__(self, "scale", scale)
        quat = freeze_array(self.orientation, "orientation", (4,))
        norm = float(np.linalg.norm(quat))
        if norm < 1e-12:
            raise InvalidInputError("orientation: quaternion norm is near zero")
        quat = quat / norm
        quat.setflags(write=False)
        object.__setattr__(self, "orientation", quat)
        if not 0.0 < self.opacity <= 1.0:
            raise InvalidInputError("opacity must lie in (0, 1]")
        color = freeze_array(self.color, "color", (3,))
        if color.min() < 0.0 or color.max() > 1.0:
            raise InvalidInputError("color components must lie in [0, 1]")
        object.__setattr__(self, "color", color)

    def covariance(self) -> np.ndarray:
        rot = rotation_matrix(self.orientation)
        return rot @ np.diag(self.scale**2) @ rot.T


@dataclass(frozen=True)
class SceneObject:
    """Rigid dynamic object: canonical splats plus a per-timestep pose trajectory."""

    object_id: str
    splats: tuple[Gaussian3D, ...]
    trajectory: tuple[RigidPose, ...]

    def __post_init__(self):
        object.__setattr__(self, "splats", tuple(self.splats))
        object.__setattr__(self, "trajectory", tuple(self.trajectory))
        if not self.trajectory:
            raise InvalidInputError(f"object {self.object_id!r}: trajectory is empty")


@dataclass(frozen=True)
class GaussianScene:
    """Static splats plus rigid objects, renderable at timesteps 0..timesteps-1."""

    static: tuple[Gaussian3D, ...]
    objects: tuple[SceneObject, ...] = ()
    timesteps: int = 1
    background: np.ndarray = (0.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "static", tuple(self.static))
        object.__setattr__(self, "objects", tuple(self.objects))
        if self.timesteps < 1:
            raise InvalidInputError("timesteps must be >= 1")
        for obj in self.objects:
            if len(obj.trajectory) != self.timesteps:
                raise InvalidInputError(
                    f"object {obj.object_id!r}: trajectory length "
                    f"{len(obj.trajectory)} does not cover {self.timesteps} timesteps"
                )
        bg = freeze_array(self.background, "background", (3,))
        if bg.min() < 0.0 or bg.max() > 1.0:
            raise InvalidInputError("background components must lie in [0, 1]")
        object.__setattr__(self, "background", bg)


def instantiate(scene: GaussianScene, t: int) -> list[Gaussian3D]:
    """Flatten the scene at timestep t: static splats plus posed object splats."""
    if not 0 <= t < scene.timesteps:
        raise TimeRangeError(
            f"timestep {t} outside scene range [0, {scene.timesteps})"
        )
    out = list(scene.static)
    for obj in scene.objects:
        pose = obj.trajectory[t]
        for g in obj.splats:
            out.append(
                Gaussian3D(
                    mean=transform_point(pose, g.mean),
                    scale=g.scale,
                    orientation=quat_multiply(pose.rotation, g.orientation),
                    opacity=g.opacity,
                    color=g.color,
                )
            )
    return out


def ray_gaussian_response(origin, direction, g: Gaussian3D) -> tuple[float, float]:
    """Peak distance and opacity-scaled peak density of one splat along one ray.

    Returns (t_peak, alpha); alpha is zero when the peak lies behind the
    origin. The direction must be unit-norm.
    """
    o = np.asarray(origin, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    if abs(float(np.linalg.norm(d)) - 1.0) > 1e-9:
        raise InvalidInputError("direction must be unit-norm")
    prec = np.linalg.inv(g.covariance())
    delta = g.mean - o
    t_peak = float(d @ prec @ delta) / float(d @ prec @ d)
    if t_peak <= 0.0:
        return t_peak, 0.0
    off = o + t_peak * d - g.mean
    alpha = g.opacity * float(np.exp(-0.5 * off @ prec @ off))
    return t_peak, alpha


def _splat_arrays(splats):
    n = len(splats)
    means = np.empty((n, 3))
    precisions = np.empty((n, 3, 3))
    opacities = np.empty(n)
    colors = np.empty((n, 3))
    for i, g in enumerate(splats):
        rot = rotation_matrix(g.orientation)
        precisions[i] = rot @ np.diag(1.0 / g.scale**2) @ rot.T
        means[i] = g.mean
        opacities[i] = g.opacity
        colors[i] = g.color
    return means, precisions, opacities, colors


def composite_rays(splats, origin, directions, background) -> tuple[np.ndarray, np.ndarray]:
    """Front-to-back composite of all splats along a batch of rays.

    directions has shape (..., 3) and must be unit-norm; returns (color
    (..., 3), depth (...)). This is the camera-model-independent core:
    rendering through any lens reduces to the rays it generates.
    """
    dirs = np.asarray(directions, dtype=np.float64)
    batch_shape = dirs.shape[:-1]
    dirs = dirs.reshape(-1, 3)
    o = np.asarray(origin, dtype=np.float64)
    bg = np.asarray(background, dtype=np.float64)
    n_rays = dirs.shape[0]
    color = np.empty((n_rays, 3))
    depth = np.empty(n_rays)

    if not splats:
        color[:] = bg
        depth[:] = 0.0
        return color.reshape(*batch_shape, 3), depth.reshape(batch_shape)

    means, precisions, opacities, colors = _splat_arrays(splats)
    # The density exponent along a ray o + t*d is quadratic in t:
    #   q(t) = c0 - 2*t*(d^T A (mean-o)) + t^2*(d^T A d),  A = covariance inverse,
    # so the peak value needs no per-(ray, splat) 3-vector temporaries.
    delta0 = means - o
    pm = np.einsum("mij,mj->mi", precisions, delta0)
    c0 = np.einsum("mi,mi->m", delta0, pm)
    prec_flat = precisions.reshape(-1, 9)
    # quad >= quad_limit implies alpha <= ALPHA_CUTOFF for any opacity <= 1
    quad_limit = -2.0 * np.log(ALPHA_CUTOFF)

    chunk = 8192
    for start in range(0, n_rays, chunk):
        d = dirs[start : start + chunk]
        n = d.shape[0]
        numer = d @ pm.T
        outer = (d[:, :, None] * d[:, None, :]).reshape(n, 9)
        denom = outer @ prec_flat.T
        t_peak = numer / denom
        quad = c0 - numer * t_peak

        cand = (t_peak > 0.0) & (quad < quad_limit)
        ray_idx, splat_idx = np.nonzero(cand)
        px_color = np.broadcast_to(bg, (n, 3)).copy()
        px_depth = np.zeros(n)
        if ray_idx.size:
            a_vals = opacities[splat_idx] * np.exp(-0.5 * np.maximum(quad[cand], 0.0))
            keep = a_vals > ALPHA_CUTOFF
            ray_idx, splat_idx, a_vals = ray_idx[keep], splat_idx[keep], a_vals[keep]
        if ray_idx.size:
            t_vals = t_peak[cand][keep]
            # Sort active pairs by (ray, peak depth); lexsort is stable, so
            # exact depth ties keep splat-index order.
            order = np.lexsort((t_vals, ray_idx))
            ray_s = ray_idx[order]
            counts = np.bincount(ray_s, minlength=n)
            starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            rank = np.arange(ray_s.size) - starts[ray_s]
            k = int(counts.max())

            dense_a = np.zeros((n, k))
            dense_t = np.zeros((n, k))
            dense_c = np.zeros((n, k, 3))
            dense_a[ray_s, rank] = a_vals[order]
            dense_t[ray_s, rank] = t_vals[order]
            dense_c[ray_s, rank] = colors[splat_idx[order]]

            trans = np.cumprod(1.0 - dense_a, axis=1)
            before = np.concatenate([np.ones((n, 1)), trans[:, :-1]], axis=1)
            weight = dense_a * before
            weight[before < MIN_TRANSMITTANCE] = 0.0  # early ray termination

            total = weight.sum(axis=1)
            hit = total >= MIN_TRANSMITTANCE
            safe = np.where(hit, total, 1.0)
            composite = np.einsum("pk,pkc->pc", weight, dense_c)
            px_color = np.where(hit[:, None], composite, px_color)
            px_depth = np.where(hit, np.einsum("pk,pk->p", weight, dense_t) / safe, 0.0)
        color[start : start + chunk] = px_color
        depth[start : start + chunk] = px_depth

    return color.reshape(*batch_shape, 3), depth.reshape(batch_shape)


def render(
    scene: GaussianScene,
    intr: CameraIntrinsics,
    cam_pose: RigidPose,
    t: int,
    background=None,
) -> tuple[ImagePlane, ImagePlane]:
    """Render the scene at timestep t through the given camera.

    Returns a color image and a single-channel depth plane in meters;
    depth 0 marks pixels that hit nothing.
    """
    splats = instantiate(scene, t)
    bg = scene.background if background is None else np.asarray(background, float)
    rays_cam = unproject(intr, pixel_centers(intr))
    dirs = rotate_vector(cam_pose, rays_cam)
    dirs = dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)
    color, depth = composite_rays(splats, cam_pose.translation, dirs, bg)
    return ImagePlane(color), ImagePlane(depth[..., None])
