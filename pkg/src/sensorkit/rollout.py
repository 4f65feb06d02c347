"""Autoregressive rollout harness with mixed-context scheduling.

Each step predicts the full sensor state (N camera views plus a spin
image) from the current conditioning frame and, for t > 0, the previous
frame's state. In inference mode the previous state is always the
harness's own last output. In training-context mode the harness replays
the data-aggregation policy instead: per step it draws, in fixed order,
whether the context comes from ground truth (default probability 0.2),
whether the previous-frame condition is dropped entirely (default 0.5),
and whether the conditioning frame gets a random rectangle mask covering
10 to 30 percent of its area (default 0.2). All draws come from one
seeded PCG64 stream, so identical seeds give bit-identical rollouts.

Predictors are pluggable callables from RolloutContext to FrameState; the
harness validates their output shapes and stamps the step index. Three
reference predictors ship with the harness: identity, constant, and an
additive-noise replay whose noise grows linearly per step.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ContractError, InvalidInputError, ShapeError
from .fusion import apply_spatial_mask
from .geometry import ImagePlane
from .losses import chamfer, psnr
from .rangeview import LidarCalibration, SpinImage, unproject_spin

__all__ = [
    "MODE_INFERENCE",
    "MODE_DAGGER",
    "SOURCE_GROUND_TRUTH",
    "SOURCE_SELF",
    "FrameState",
    "RolloutContext",
    "DaggerConfig",
    "RolloutResult",
    "DriftRecord",
    "step",
    "rollout",
    "drift_curve",
    "IdentityPredictor",
    "ConstantPredictor",
    "AdditiveNoisePredictor",
]

MODE_INFERENCE = "inference"
MODE_DAGGER = "dagger_training_context"
SOURCE_GROUND_TRUTH = "ground_truth"
SOURCE_SELF = "self_generated"


@dataclass(frozen=True)
class FrameState:
    """Full sensor state of one step: N camera views plus the LiDAR spin image."""

    views: tuple[ImagePlane, ...]
    spin: SpinImage
    t: int

    def __post_init__(self):
        object.__setattr__(self, "views", tuple(self.views))
        if not self.views:
            raise InvalidInputError("a frame needs at least one camera view")


@dataclass(frozen=True)
class RolloutContext:
    """Conditioning for one step: the dashcam frame plus the previous state.

    previous is None at t=0 and whenever the temporal condition was
    dropped; source records which context the mixing policy drew for this
    step even when the condition was subsequently dropped.
    """

    previous: FrameState | None
    source: str | None
    dashcam_frame: ImagePlane
    t: int
    condition_dropped: bool = False
    spatially_masked: bool = False

    def __post_init__(self):
        if self.t < 0:
            raise InvalidInputError("timestep must be non-negative")
        if self.t == 0 and self.previous is not None:
            raise InvalidInputError("the first step cannot carry a previous frame")
        if self.source is not None and self.source not in (
            SOURCE_GROUND_TRUTH,
            SOURCE_SELF,
        ):
            raise InvalidInputError(f"unknown context source {self.source!r}")


@dataclass(frozen=True)
class DaggerConfig:
    """Context-mixing policy knobs and the rollout seed."""

    p_ground_truth: float = 0.2
    p_condition_drop: float = 0.5
    p_spatial_mask: float = 0.2
    horizon: int = 6
    seed: int = 0

    def __post_init__(self):
        for name in ("p_ground_truth", "p_condition_drop", "p_spatial_mask"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must lie in [0, 1]")
        if self.horizon < 1:
            raise InvalidInputError("horizon must be >= 1")


@dataclass(frozen=True)
class RolloutResult:
    frames: tuple[FrameState, ...]
    contexts: tuple[RolloutContext, ...]

    def __post_init__(self):
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "contexts", tuple(self.contexts))


def _check_contract(out: FrameState, expected: FrameState | None):
    if not isinstance(out, FrameState):
        raise ContractError("predictor must return a FrameState", field="return")
    if expected is None:
        return
    if len(out.views) != len(expected.views):
        raise ContractError(
            f"predictor returned {len(out.views)} views, expected {len(expected.views)}",
            field="views",
        )
    for i, (got, want) in enumerate(zip(out.views, expected.views)):
        if got.data.shape != want.data.shape:
            raise ContractError(
                f"view shape {got.data.shape} does not match {want.data.shape}",
                field=f"views[{i}]",
            )
    if out.spin.data.shape != expected.spin.data.shape:
        raise ContractError(
            f"spin shape {out.spin.data.shape} does not match {expected.spin.data.shape}",
            field="spin",
        )


def step(predictor, ctx: RolloutContext, expected: FrameState | None = None) -> FrameState:
    """Run the predictor once, stamping ctx.t and validating output shapes."""
    out = predictor(ctx)
    _check_contract(out, expected)
    if out.t != ctx.t:
        out = replace(out, t=ctx.t)
    return out


def _random_rectangle(img: ImagePlane, rng: np.random.Generator):
    # Area fraction in [0.1, 0.3]; aspect drawn so both sides fit the frame.
    frac = rng.uniform(0.1, 0.3)
    w_frac = rng.uniform(frac, 1.0)
    h_frac = frac / w_frac
    rw = min(img.width, max(1, round(w_frac * img.width)))
    rh = min(img.height, max(1, round(h_frac * img.height)))
    top = int(rng.integers(0, img.height - rh + 1))
    left = int(rng.integers(0, img.width - rw + 1))
    return top, left, rh, rw


def rollout(
    predictor,
    dashcam_frames,
    gt_frames=None,
    cfg: DaggerConfig | None = None,
    mode: str = MODE_INFERENCE,
) -> RolloutResult:
    """Run the harness for min(len(dashcam_frames), cfg.horizon) steps.

    Inference mode conditions every step on the previous self-generated
    frame and must not be handed ground-truth frames. Training-context
    mode requires ground-truth frames aligned with the dashcam frames and
    applies the mixing policy described in the module docstring.
    """
    cfg = cfg if cfg is not None else DaggerConfig()
    if mode not in (MODE_INFERENCE, MODE_DAGGER):
        raise InvalidInputError(f"unknown mode {mode!r}")
    dashcam_frames = list(dashcam_frames)
    if not dashcam_frames:
        raise InvalidInputError("dashcam_frames is empty")
    if mode == MODE_INFERENCE:
        if gt_frames is not None:
            raise InvalidInputError("inference mode must not receive gt_frames")
    else:
        if gt_frames is None:
            raise InvalidInputError("training-context mode requires gt_frames")
        gt_frames = list(gt_frames)
        if len(gt_frames) != len(dashcam_frames):
            raise InvalidInputError(
                f"{len(gt_frames)} gt frames vs {len(dashcam_frames)} dashcam frames"
            )

    rng = np.random.default_rng(cfg.seed)
    steps = min(len(dashcam_frames), cfg.horizon)
    frames: list[FrameState] = []
    contexts: list[RolloutContext] = []
    template: FrameState | None = None

    for t in range(steps):
        dash = dashcam_frames[t]
        previous = None
        source = None
        dropped = False
        masked = False
        if t > 0:
            if mode == MODE_DAGGER:
                use_gt = rng.uniform() < cfg.p_ground_truth
                source = SOURCE_GROUND_TRUTH if use_gt else SOURCE_SELF
                dropped = rng.uniform() < cfg.p_condition_drop
                if not dropped:
                    previous = gt_frames[t - 1] if use_gt else frames[t - 1]
            else:
                source = SOURCE_SELF
                previous = frames[t - 1]
        if mode == MODE_DAGGER and rng.uniform() < cfg.p_spatial_mask:
            masked = True
            dash = apply_spatial_mask(dash, [_random_rectangle(dash, rng)])
        ctx = RolloutContext(
            previous=previous,
            source=source,
            dashcam_frame=dash,
            t=t,
            condition_dropped=dropped,
            spatially_masked=masked,
        )
        out = step(predictor, ctx, expected=template)
        if template is None:
            template = out
        frames.append(out)
        contexts.append(ctx)
    return RolloutResult(tuple(frames), tuple(contexts))


@dataclass(frozen=True)
class DriftRecord:
    """Per-step divergence from ground truth: PSNR per view plus Chamfer."""

    step: int
    view_psnr_db: tuple[float, ...]
    chamfer_m: float


def drift_curve(generated, gt, calib: LidarCalibration) -> list[DriftRecord]:
    """Per-step PSNR (each view) and Chamfer between the unprojected spins."""
    generated = list(generated)
    gt = list(gt)
    if len(generated) != len(gt):
        raise ShapeError(f"{len(generated)} generated frames vs {len(gt)} gt frames")
    records = []
    for gen_frame, gt_frame in zip(generated, gt):
        if len(gen_frame.views) != len(gt_frame.views):
            raise ShapeError("frames disagree on view count")
        psnrs = tuple(psnr(g, r) for g, r in zip(gen_frame.views, gt_frame.views))
        dist = chamfer(
            unproject_spin(gen_frame.spin, calib), unproject_spin(gt_frame.spin, calib)
        )
        records.append(DriftRecord(gen_frame.t, psnrs, dist))
    return records


class IdentityPredictor:
    """Copies the previous frame; falls back to a fixed initial frame at t=0
    or when the temporal condition was dropped."""

    def __init__(self, initial: FrameState):
        self.initial = initial

    def __call__(self, ctx: RolloutContext) -> FrameState:
        base = ctx.previous if ctx.previous is not None else self.initial
        return replace(base, t=ctx.t)


class ConstantPredictor:
    """Always returns the same frame."""

    def __init__(self, frame: FrameState):
        self.frame = frame

    def __call__(self, ctx: RolloutContext) -> FrameState:
        return replace(self.frame, t=ctx.t)


class AdditiveNoisePredictor:
    """Replays a base sequence with zero-mean noise whose scale grows linearly
    with the step index; scale 0 reproduces the base sequence exactly.

    Noise is drawn from a per-step stream keyed on (seed, t), so output is
    deterministic and independent of call order. Views are perturbed on
    all channels; the spin is perturbed on its continuous channels at
    valid cells only, keeping the validity mask intact.
    """

    def __init__(self, base_frames, noise_scale: float = 0.01, seed: int = 0):
        self.base_frames = list(base_frames)
        self.noise_scale = float(noise_scale)
        self.seed = int(seed)

    def __call__(self, ctx: RolloutContext) -> FrameState:
        base = self.base_frames[ctx.t]
        if self.noise_scale == 0.0:
            return replace(base, t=ctx.t)
        rng = np.random.default_rng((self.seed, ctx.t))
        sigma = self.noise_scale * (ctx.t + 1)
        views = tuple(
            ImagePlane(np.clip(v.data + rng.normal(0.0, sigma, v.data.shape), 0.0, 1.0))
            for v in base.views
        )
        spin_data = np.array(base.spin.data, dtype=np.float64)
        valid = spin_data[:, :, 3:4] == 1.0
        noise = rng.normal(0.0, sigma, spin_data[:, :, :3].shape)
        spin_data[:, :, :3] = np.clip(spin_data[:, :, :3] + noise * valid, 0.0, 1.0)
        return FrameState(views=views, spin=SpinImage(spin_data), t=ctx.t)
