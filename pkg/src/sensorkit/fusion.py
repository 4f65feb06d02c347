"""Reference kernels for cross-sensor feature fusion.

Camera and LiDAR feature grids are flattened into one token sequence
(camera tokens first in view-major, row-major order, then LiDAR tokens
row-major) over which a single-head self-attention kernel runs. Two
conditioning layouts are provided: view concatenation appends the
conditional frame's latent as an extra view carrying its raymap and a
binary mask channel, while channel concatenation replicates the
conditional latent onto every target view's channels. Both layouts are
pure rearrangements and preserve every input value exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cameras import Raymap
from .errors import InvalidInputError, ShapeError
from .geometry import ImagePlane

__all__ = [
    "TokenLayout",
    "ConditionedStack",
    "flatten_unified",
    "unflatten_unified",
    "self_attention",
    "assemble_vc",
    "disassemble_vc",
    "assemble_cc",
    "apply_spatial_mask",
]

RAYMAP_CHANNELS = 6  # origin xyz + direction xyz


@dataclass(frozen=True)
class TokenLayout:
    """Token bookkeeping for a unified camera+LiDAR sequence."""

    n_views: int
    camera_grid: tuple[int, int]
    lidar_grid: tuple[int, int]
    feature_dim: int

    @property
    def camera_tokens(self) -> int:
        return self.n_views * self.camera_grid[0] * self.camera_grid[1]

    @property
    def lidar_tokens(self) -> int:
        return self.lidar_grid[0] * self.lidar_grid[1]

    @property
    def total_tokens(self) -> int:
        return self.camera_tokens + self.lidar_tokens


def flatten_unified(cam_feats, lidar_feats) -> tuple[np.ndarray, TokenLayout]:
    """Concatenate camera tokens (view-major) and LiDAR tokens into one sequence."""
    cam = np.asarray(cam_feats, dtype=np.float64)
    lidar = np.asarray(lidar_feats, dtype=np.float64)
    if cam.ndim != 4:
        raise ShapeError(f"camera features: expected (N, h, w, d), got {cam.shape}")
    if lidar.ndim != 3:
        raise ShapeError(f"lidar features: expected (h, w, d), got {lidar.shape}")
    if cam.shape[3] != lidar.shape[2]:
        raise ShapeError(
            f"feature dims differ: camera {cam.shape[3]} vs lidar {lidar.shape[2]}"
        )
    layout = TokenLayout(
        n_views=cam.shape[0],
        camera_grid=(cam.shape[1], cam.shape[2]),
        lidar_grid=(lidar.shape[0], lidar.shape[1]),
        feature_dim=cam.shape[3],
    )
    tokens = np.concatenate(
        [cam.reshape(layout.camera_tokens, layout.feature_dim),
         lidar.reshape(layout.lidar_tokens, layout.feature_dim)],
        axis=0,
    )
    return tokens, layout


def unflatten_unified(tokens, layout: TokenLayout) -> tuple[np.ndarray, np.ndarray]:
    """Invert flatten_unified bit-exactly."""
    arr = np.asarray(tokens, dtype=np.float64)
    if arr.shape != (layout.total_tokens, layout.feature_dim):
        raise ShapeError(
            f"tokens: expected {(layout.total_tokens, layout.feature_dim)}, got {arr.shape}"
        )
    kc = layout.camera_tokens
    cam = arr[:kc].reshape(layout.n_views, *layout.camera_grid, layout.feature_dim)
    lidar = arr[kc:].reshape(*layout.lidar_grid, layout.feature_dim)
    return cam, lidar


def self_attention(tokens, wq, wk, wv) -> np.ndarray:
    """Single-head scaled dot-product self-attention with a stable softmax."""
    t = np.asarray(tokens, dtype=np.float64)
    mats = [np.asarray(m, dtype=np.float64) for m in (wq, wk, wv)]
    if t.ndim != 2:
        raise ShapeError(f"tokens: expected (K, d), got {t.shape}")
    d = t.shape[1]
    for name, m in zip(("wq", "wk", "wv"), mats):
        if m.shape != (d, d):
            raise ShapeError(f"{name}: expected ({d}, {d}), got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise InvalidInputError(f"{name}: weights must be finite")
    q, k, v = (t @ m for m in mats)
    logits = q @ k.T / np.sqrt(d)
    logits -= logits.max(axis=1, keepdims=True)
    weights = np.exp(logits)
    weights /= weights.sum(axis=1, keepdims=True)
    return weights @ v


def _raymap_channels(raymap: Raymap) -> np.ndarray:
    return np.concatenate([raymap.origins, raymap.directions], axis=-1)


@dataclass(frozen=True)
class ConditionedStack:
    """(N+1, h, w, c+7) latent stack: [latent | raymap(6) | mask(1)] per view.

    View N is the conditional view; its mask channel is 1.0 everywhere
    and 0.0 on all target views.
    """

    data: np.ndarray
    latent_channels: int

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 4:
            raise ShapeError(f"data: expected (N+1, h, w, c), got {arr.shape}")
        if arr.shape[3] != self.latent_channels + RAYMAP_CHANNELS + 1:
            raise ShapeError("channel count does not match latent+raymap+mask layout")
        mask = arr[..., -1]
        if not (np.all(mask[:-1] == 0.0) and np.all(mask[-1] == 1.0)):
            raise InvalidInputError(
                "mask channel must be 0 on target views and 1 on the conditional view"
            )
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def n_views(self) -> int:
        return self.data.shape[0] - 1


def assemble_vc(target_latents, cond_latent, raymaps) -> ConditionedStack:
    """View-concatenation layout: conditional latent appended as an extra view.

    raymaps holds N+1 raymaps at the latent resolution, normalized with
    respect to view 0 (so the first raymap's origins are all zero).
    """
    targets = np.asarray(target_latents, dtype=np.float64)
    cond = np.asarray(cond_latent, dtype=np.float64)
    if targets.ndim != 4:
        raise ShapeError(f"target latents: expected (N, h, w, c), got {targets.shape}")
    n, h, w, c = targets.shape
    if cond.shape != (h, w, c):
        raise ShapeError(f"conditional latent: expected {(h, w, c)}, got {cond.shape}")
    raymaps = list(raymaps)
    if len(raymaps) != n + 1:
        raise ShapeError(f"expected {n + 1} raymaps, got {len(raymaps)}")
    for i, rm in enumerate(raymaps):
        if (rm.height, rm.width) != (h, w):
            raise ShapeError(
                f"raymap {i}: grid {(rm.height, rm.width)} does not match latent {(h, w)}"
            )
    if np.any(raymaps[0].origins != 0.0):
        raise InvalidInputError("raymaps must be normalized to view 0 (zero origins)")

    latents = np.concatenate([targets, cond[None]], axis=0)
    rays = np.stack([_raymap_channels(rm) for rm in raymaps], axis=0)
    mask = np.zeros((n + 1, h, w, 1))
    mask[n] = 1.0
    return ConditionedStack(np.concatenate([latents, rays, mask], axis=-1), c)


def disassemble_vc(stack: ConditionedStack):
    """Recover (target_latents, cond_latent, raymap_channels) bit-exactly."""
    c = stack.latent_channels
    latents = stack.data[..., :c]
    rays = stack.data[..., c : c + RAYMAP_CHANNELS]
    return latents[:-1].copy(), latents[-1].copy(), rays.copy()


def assemble_cc(target_latents, cond_latent) -> np.ndarray:
    """Channel-concatenation layout: conditional latent replicated onto each view."""
    targets = np.asarray(target_latents, dtype=np.float64)
    cond = np.asarray(cond_latent, dtype=np.float64)
    if targets.ndim != 4:
        raise ShapeError(f"target latents: expected (N, h, w, c), got {targets.shape}")
    if cond.shape != targets.shape[1:]:
        raise ShapeError(
            f"conditional latent: expected {targets.shape[1:]}, got {cond.shape}"
        )
    tiled = np.broadcast_to(cond, targets.shape)
    return np.concatenate([targets, tiled], axis=-1)


def apply_spatial_mask(cond: ImagePlane, mask_region) -> ImagePlane:
    """Zero out the given (top, left, height, width) pixel rectangles."""
    rects = list(mask_region)
    data = np.array(cond.data)
    for i, (top, left, rh, rw) in enumerate(rects):
        if rh < 0 or rw < 0:
            raise InvalidInputError(f"rectangle {i}: extent must be non-negative")
        if top < 0 or left < 0 or top + rh > cond.height or left + rw > cond.width:
            raise InvalidInputError(
                f"rectangle {i}: {(top, left, rh, rw)} exceeds "
                f"{cond.height}x{cond.width} image bounds"
            )
        data[top : top + rh, left : left + rw, :] = 0.0
    return ImagePlane(data)
