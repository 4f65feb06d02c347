"""Reconstruction losses, evaluation metrics, and a gradient checker.

The loss suite covers masked L1 on the continuous spin channels, binary
cross-entropy on validity, a diagonal-Gaussian KL against the unit prior,
and a perceptual distance over pluggable feature stacks (the shipped
extractor is the identity: one layer holding the raw channels). The total
loss is the weighted sum of all terms with every weight defaulting to 1.

Metrics: symmetric Chamfer distance (mean of nearest-neighbor distances,
both directions, halved; a squared variant sits behind a flag), PSNR with
an infinity sentinel for identical images, and SSIM with the standard
11x11 Gaussian window (sigma 1.5, K1=0.01, K2=0.03, dynamic range 1)
evaluated over fully interior windows.

Analytic gradients for each loss are provided alongside and are verified
by central differences (step 1e-5); the relative error per coordinate is
|g_fd - g_an| / max(1e-8, |g_fd| + |g_an|).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateInputError,
    InvalidInputError,
    NumericError,
    ShapeError,
)
from .geometry import ImagePlane, PointCloud, freeze_array
from .rangeview import LidarCalibration, SpinImage, compute_normals

__all__ = [
    "LatentGaussianStats",
    "LossWeights",
    "FeatureLayer",
    "FeatureStack",
    "SpinSignals",
    "identity_features",
    "l1_loss",
    "l1_grad",
    "bce_validity",
    "bce_grad",
    "kl_divergence",
    "kl_grad",
    "lpips_distance",
    "lpips_grad",
    "total_vae_loss",
    "chamfer",
    "psnr",
    "ssim",
    "grad_check",
    "random_gradcheck_instance",
]

BCE_CLAMP = 1e-7
GRAD_STEP = 1e-5


@dataclass(frozen=True)
class LatentGaussianStats:
    """Diagonal-Gaussian encoder output: per-dimension mean and variance."""

    mu: np.ndarray
    sigma_sq: np.ndarray

    def __post_init__(self):
        mu = freeze_array(self.mu, "mu")
        sigma_sq = freeze_array(self.sigma_sq, "sigma_sq")
        if mu.ndim != 1 or sigma_sq.shape != mu.shape:
            raise ShapeError("mu and sigma_sq must be 1-D arrays of equal length")
        if np.any(sigma_sq <= 0.0):
            raise InvalidInputError("sigma_sq must be strictly positive")
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma_sq", sigma_sq)


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for every term of the total loss."""

    range_l1: float = 1.0
    elongation_l1: float = 1.0
    intensity_l1: float = 1.0
    validity_bce: float = 1.0
    normals_lpips: float = 1.0
    elongation_lpips: float = 1.0
    intensity_lpips: float = 1.0
    validity_lpips: float = 1.0
    kl: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value >= 0.0):
                raise InvalidInputError(f"{f.name}: weight must be finite and >= 0")

    def as_dict(self) -> dict[str, float]:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


@dataclass(frozen=True)
class FeatureLayer:
    """One (H, W, C) activation grid with per-channel weights of length C."""

    activations: np.ndarray
    channel_weights: np.ndarray

    def __post_init__(self):
        act = freeze_array(self.activations, "activations")
        if act.ndim != 3:
            raise ShapeError(f"activations: expected (H, W, C), got {act.shape}")
        weights = freeze_array(self.channel_weights, "channel_weights", (act.shape[2],))
        if np.any(weights < 0.0):
            raise InvalidInputError("channel_weights must be non-negative")
        object.__setattr__(self, "activations", act)
        object.__setattr__(self, "channel_weights", weights)


@dataclass(frozen=True)
class FeatureStack:
    layers: tuple[FeatureLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))


def identity_features(grid, channel_weights=None) -> FeatureStack:
    """Identity extractor: a single layer holding the raw channels."""
    arr = np.asarray(grid, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[..., None]
    if channel_weights is None:
        channel_weights = np.ones(arr.shape[2])
    return FeatureStack((FeatureLayer(arr, channel_weights),))


def _as_grid(name, value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name}: values must be finite")
    return arr


def l1_loss(pred, target, valid_weight=None) -> float:
    """Mean absolute difference; a weight grid restricts the mean to weighted cells."""
    p = _as_grid("pred", pred)
    t = _as_grid("target", target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {t.shape}")
    diff = np.abs(p - t)
    if valid_weight is None:
        return float(diff.mean())
    w = _as_grid("valid_weight", valid_weight)
    if w.shape != p.shape:
        raise ShapeError(f"valid_weight shape {w.shape} does not match {p.shape}")
    total = w.sum()
    if total <= 0.0:
        raise DegenerateInputError("valid_weight sums to zero")
    return float((w * diff).sum() / total)


def l1_grad(pred, target, valid_weight=None) -> np.ndarray:
    """Gradient of l1_loss with respect to pred (subgradient away from ties)."""
    p = _as_grid("pred", pred)
    t = _as_grid("target", target)
    sign = np.sign(p - t)
    if valid_weight is None:
        return sign / p.size
    w = _as_grid("valid_weight", valid_weight)
    return w * sign / w.sum()


def bce_validity(pred_prob, target) -> float:
    """Mean binary cross-entropy; predictions are clamped to [1e-7, 1 - 1e-7]."""
    p = _as_grid("pred_prob", pred_prob)
    t = _as_grid("target", target)
    if p.shape != t.shape:
        raise ShapeError(f"shape mismatch: {p.shape} vs {t.shape}")
    if not np.all((t == 0.0) | (t == 1.0)):
        raise InvalidInputError("target must be binary (0 or 1)")
    clamped = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(-np.mean(t * np.log(clamped) + (1.0 - t) * np.log(1.0 - clamped)))


def bce_grad(pred_prob, target) -> np.ndarray:
    """Gradient of bce_validity w.r.t. pred_prob, valid away from the clamp bounds."""
    p = _as_grid("pred_prob", pred_prob)
    t = _as_grid("target", target)
    clamped = np.clip(p, BCE_CLAMP, 1.0 - BCE_CLAMP)
    interior = (p > BCE_CLAMP) & (p < 1.0 - BCE_CLAMP)
    grad = (-t / clamped + (1.0 - t) / (1.0 - clamped)) / p.size
    return np.where(interior, grad, 0.0)


def kl_divergence(stats: LatentGaussianStats) -> float:
    """KL divergence of a diagonal Gaussian from the unit prior (unweighted)."""
    mu, var = stats.mu, stats.sigma_sq
    return float(0.5 * np.sum(mu**2 + var - np.log(var) - 1.0))


def kl_grad(stats: LatentGaussianStats) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of kl_divergence with respect to (mu, sigma_sq)."""
    return stats.mu.copy(), 0.5 * (1.0 - 1.0 / stats.sigma_sq)


def _normalize_channelwise(act: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.linalg.norm(act, axis=-1, keepdims=True)
    unit = np.where(norm > 0.0, act / np.maximum(norm, 1e-300), 0.0)
    return unit, norm[..., 0]


def lpips_distance(a: FeatureStack, b: FeatureStack) -> float:
    """Perceptual distance: channel-normalized, weighted, squared, spatially averaged.

    Per layer the feature vector at each location is unit-normalized along
    channels (zero vectors stay zero), the difference is scaled by the
    channel weights, and the squared L2 norms are averaged over space;
    layer contributions are summed.
    """
    if len(a.layers) != len(b.layers):
        raise ShapeError("feature stacks have different layer counts")
    total = 0.0
    for i, (la, lb) in enumerate(zip(a.layers, b.layers)):
        if la.activations.shape != lb.activations.shape:
            raise ShapeError(
                f"layer {i}: shape {la.activations.shape} vs {lb.activations.shape}"
            )
        ua, _ = _normalize_channelwise(la.activations)
        ub, _ = _normalize_channelwise(lb.activations)
        diff = la.channel_weights * (ua - ub)
        h, w = la.activations.shape[:2]
        total += float(np.sum(diff**2)) / (h * w)
    return total


def lpips_grad(a: FeatureStack, b: FeatureStack) -> list[np.ndarray]:
    """Gradients of lpips_distance w.r.t. the raw activations of stack a.

    Valid where feature vectors are bounded away from zero (normalization
    is non-differentiable at the origin).
    """
    grads = []
    for la, lb in zip(a.layers, b.layers):
        ua, norm = _normalize_channelwise(la.activations)
        ub, _ = _normalize_channelwise(lb.activations)
        w2 = la.channel_weights**2
        u = w2 * (ua - ub)
        h, w = la.activations.shape[:2]
        proj = u - np.sum(u * ua, axis=-1, keepdims=True) * ua
        safe = np.maximum(norm, 1e-300)[..., None]
        grads.append(np.where(norm[..., None] > 0.0, 2.0 * proj / safe, 0.0) / (h * w))
    return grads


@dataclass(frozen=True)
class SpinSignals:
    """Per-signal grids of one spin image; validity is binary for targets and a
    probability grid for predictions."""

    range: np.ndarray
    intensity: np.ndarray
    elongation: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        shape = None
        for f in fields(self):
            arr = freeze_array(getattr(self, f.name), f.name)
            if arr.ndim != 2:
                raise ShapeError(f"{f.name}: expected a 2-D grid, got {arr.shape}")
            if shape is None:
                shape = arr.shape
            elif arr.shape != shape:
                raise ShapeError(f"{f.name}: shape {arr.shape} does not match {shape}")
            object.__setattr__(self, f.name, arr)

    @classmethod
    def from_spin(cls, spin: SpinImage) -> "SpinSignals":
        return cls(
            range=spin.range.astype(np.float64),
            intensity=spin.intensity.astype(np.float64),
            elongation=spin.elongation.astype(np.float64),
            validity=spin.validity.astype(np.float64),
        )

    def to_spin(self, validity_threshold: float = 0.5) -> SpinImage:
        mask = (self.validity >= validity_threshold).astype(np.float32)
        data = np.stack(
            [
                np.clip(self.range, 0.0, 1.0) * mask,
                np.clip(self.intensity, 0.0, 1.0) * mask,
                np.clip(self.elongation, 0.0, 1.0) * mask,
                mask,
            ],
            axis=-1,
        )
        return SpinImage(data)


def total_vae_loss(
    predictions: SpinSignals,
    targets: SpinSignals,
    stats: LatentGaussianStats,
    weights: LossWeights,
    calib: LidarCalibration,
    feature_extractor=None,
) -> tuple[float, dict[str, float]]:
    """Weighted sum of every reconstruction and regularization term.

    Continuous channels use L1 masked by the target validity (loss on
    cells without a return is meaningless under the zero-fill convention),
    validity uses BCE, and the perceptual terms run on surface normals
    (recomputed from each side's spin), elongation, intensity, and the
    validity probabilities. Returns (total, per-term breakdown before
    weighting); the total equals the dot product of breakdown and weights.
    """
    if predictions.range.shape != targets.range.shape:
        raise ShapeError("prediction and target grids differ in shape")
    extract = feature_extractor if feature_extractor is not None else identity_features
    mask = targets.validity

    pred_normals = compute_normals(predictions.to_spin(), calib)
    target_normals = compute_normals(targets.to_spin(), calib)

    breakdown = {
        "range_l1": l1_loss(predictions.range, targets.range, mask),
        "elongation_l1": l1_loss(predictions.elongation, targets.elongation, mask),
        "intensity_l1": l1_loss(predictions.intensity, targets.intensity, mask),
        "validity_bce": bce_validity(predictions.validity, targets.validity),
        "normals_lpips": lpips_distance(
            extract(pred_normals.normals), extract(target_normals.normals)
        ),
        "elongation_lpips": lpips_distance(
            extract(predictions.elongation), extract(targets.elongation)
        ),
        "intensity_lpips": lpips_distance(
            extract(predictions.intensity), extract(targets.intensity)
        ),
        "validity_lpips": lpips_distance(
            extract(predictions.validity), extract(targets.validity)
        ),
        "kl": kl_divergence(stats),
    }
    weight_map = weights.as_dict()
    total = sum(weight_map[name] * value for name, value in breakdown.items())
    return float(total), breakdown


def chamfer(a: PointCloud, b: PointCloud, squared: bool = False) -> float:
    """Symmetric Chamfer distance in meters (kd-tree accelerated).

    Half the sum of the two directed mean nearest-neighbor distances;
    with squared=True the distances are squared before averaging.
    """
    if len(a) == 0 or len(b) == 0:
        raise DegenerateInputError("chamfer distance needs two non-empty clouds")
    d_ab, _ = cKDTree(b.points).query(a.points)
    d_ba, _ = cKDTree(a.points).query(b.points)
    if squared:
        d_ab, d_ba = d_ab**2, d_ba**2
    return 0.5 * (float(d_ab.mean()) + float(d_ba.mean()))


def _check_image_pair(a: ImagePlane, b: ImagePlane):
    if a.data.shape != b.data.shape:
        raise ShapeError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")
    for name, img in (("a", a), ("b", b)):
        if img.data.min() < 0.0 or img.data.max() > 1.0:
            raise InvalidInputError(f"image {name}: values must lie in [0, 1]")


def psnr(a: ImagePlane, b: ImagePlane) -> float:
    """Peak signal-to-noise ratio in dB for unit dynamic range; inf when identical."""
    _check_image_pair(a, b)
    mse = float(np.mean((a.data - b.data) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(a: ImagePlane, b: ImagePlane) -> float:
    """Structural similarity over interior 11x11 Gaussian windows, averaged
    across windows and channels."""
    _check_image_pair(a, b)
    size, sigma = 11, 1.5
    if a.height < size or a.width < size:
        raise ShapeError(f"images must be at least {size}x{size} for SSIM")
    win = _gaussian_window(size, sigma)
    c1, c2 = (0.01 * 1.0) ** 2, (0.03 * 1.0) ** 2
    view = np.lib.stride_tricks.sliding_window_view
    values = []
    for ch in range(a.channels):
        x = a.data[:, :, ch]
        y = b.data[:, :, ch]
        wx = view(x, (size, size))
        wy = view(y, (size, size))
        mu_x = np.einsum("ijkl,kl->ij", wx, win)
        mu_y = np.einsum("ijkl,kl->ij", wy, win)
        ex2 = np.einsum("ijkl,kl->ij", wx * wx, win)
        ey2 = np.einsum("ijkl,kl->ij", wy * wy, win)
        exy = np.einsum("ijkl,kl->ij", wx * wy, win)
        var_x = ex2 - mu_x**2
        var_y = ey2 - mu_y**2
        cov = exy - mu_x * mu_y
        score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
            (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
        )
        values.append(score.mean())
    return float(np.mean(values))


def grad_check(loss, analytic_grad, point) -> float:
    """Max relative error between analytic and central-difference gradients.

    The loss must be smooth at the probe point; a non-finite loss value at
    any probe raises a numeric error.
    """
    x = np.array(point, dtype=np.float64).ravel()
    g_an = np.asarray(analytic_grad(x), dtype=np.float64).ravel()
    if g_an.shape != x.shape:
        raise ShapeError("analytic gradient length does not match the point")
    worst = 0.0
    for i in range(x.size):
        probe = x.copy()
        probe[i] = x[i] + GRAD_STEP
        f_plus = float(loss(probe))
        probe[i] = x[i] - GRAD_STEP
        f_minus = float(loss(probe))
        if not (math.isfinite(f_plus) and math.isfinite(f_minus)):
            raise NumericError(f"loss is not finite near coordinate {i}")
        g_fd = (f_plus - f_minus) / (2.0 * GRAD_STEP)
        rel = abs(g_fd - g_an[i]) / max(1e-8, abs(g_fd) + abs(g_an[i]))
        worst = max(worst, rel)
    return worst


def random_gradcheck_instance(name: str, rng: np.random.Generator):
    """Build (loss_fn, grad_fn, point) for one named loss at a random smooth point.

    Instances avoid the non-smooth sets: L1 ties, BCE clamp bounds, and
    zero feature vectors for the perceptual distance.
    """
    if name == "l1":
        shape = (6, 6)
        target = rng.uniform(0.0, 1.0, shape)
        offset = rng.uniform(0.05, 0.4, shape) * rng.choice([-1.0, 1.0], shape)
        pred = np.clip(target + offset, -1.0, 2.0)
        return (
            lambda v: l1_loss(v.reshape(shape), target),
            lambda v: l1_grad(v.reshape(shape), target).ravel(),
            pred.ravel(),
        )
    if name == "bce":
        shape = (6, 6)
        target = rng.integers(0, 2, shape).astype(np.float64)
        pred = rng.uniform(0.05, 0.95, shape)
        return (
            lambda v: bce_validity(v.reshape(shape), target),
            lambda v: bce_grad(v.reshape(shape), target).ravel(),
            pred.ravel(),
        )
    if name == "kl":
        d = 8
        mu = rng.normal(0.0, 1.0, d)
        var = rng.uniform(0.3, 2.5, d)

        def loss_fn(v):
            return kl_divergence(LatentGaussianStats(v[:d], v[d:]))

        def grad_fn(v):
            g_mu, g_var = kl_grad(LatentGaussianStats(v[:d], v[d:]))
            return np.concatenate([g_mu, g_var])

        return loss_fn, grad_fn, np.concatenate([mu, var])
    if name == "lpips":
        shapes = [(4, 4, 3), (3, 3, 2)]
        weights = [rng.uniform(0.2, 1.5, s[2]) for s in shapes]

        def sample_stack():
            layers = []
            for s, w in zip(shapes, weights):
                act = rng.normal(0.0, 1.0, s)
                norm = np.linalg.norm(act, axis=-1, keepdims=True)
                act = act * np.maximum(0.3 / np.maximum(norm, 1e-12), 1.0)
                layers.append(FeatureLayer(act, w))
            return FeatureStack(tuple(layers))

        stack_b = sample_stack()
        stack_a = sample_stack()
        sizes = [int(np.prod(s)) for s in shapes]

        def unpack(v):
            layers, start = [], 0
            for s, w, n in zip(shapes, weights, sizes):
                layers.append(FeatureLayer(v[start : start + n].reshape(s), w))
                start += n
            return FeatureStack(tuple(layers))

        def loss_fn(v):
            return lpips_distance(unpack(v), stack_b)

        def grad_fn(v):
            return np.concatenate([g.ravel() for g in lpips_grad(unpack(v), stack_b)])

        point = np.concatenate([l.activations.ravel() for l in stack_a.layers])
        return loss_fn, grad_fn, point
    raise InvalidInputError(f"unknown loss name {name!r}")
