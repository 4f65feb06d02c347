"""Sampling of realistic dashcam rigs and photometric normalization.

Extrinsics come first: a vehicle category fixes uniform ranges for the
mount translation (forward x, lateral y, height z in the vehicle frame)
and half-widths for small pitch/yaw/roll installation errors. Intrinsics
follow: a base profile is drawn from a calibrated set and perturbed with
uniform noise (focal lengths by +-5 percent, principal point by +-1
percent of the image size; distortion coefficients are left untouched).

All randomness flows through a caller-supplied numpy Generator (PCG64 in
the CLI), and the draw order is fixed: x, y, z, pitch, yaw, roll, profile
index, fx factor, fy factor, cx shift, cy shift. Given the same seed the
sampler is byte-identical across platforms; parallel use should give each
worker an independent stream spawned from one SeedSequence.

The sedan translation and pitch numbers follow published dashcam mounting
statistics; the SUV and truck tables are toolkit defaults meant to be
overridden from configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .cameras import CameraIntrinsics, camera_alignment_quat
from .errors import ConfigError, InvalidInputError
from .geometry import ImagePlane, RigidPose, quat_from_axis_angle, quat_multiply

__all__ = [
    "VehicleCategory",
    "DashcamProfile",
    "DashcamRigSample",
    "BUILTIN_CATEGORIES",
    "DEFAULT_PROFILES",
    "sample_rig",
    "perturb_intrinsics",
    "photometric_normalize",
]


@dataclass(frozen=True)
class VehicleCategory:
    """Per-category mounting distribution: translation ranges and angle half-widths."""

    name: str
    height_range: tuple[float, float]
    forward_range: tuple[float, float]
    lateral_range: tuple[float, float]
    pitch_half_width_deg: float
    yaw_half_width_deg: float
    roll_half_width_deg: float

    def __post_init__(self):
        for label in ("height_range", "forward_range", "lateral_range"):
            lo, hi = getattr(self, label)
            if not lo <= hi:
                raise InvalidInputError(f"{label}: min must not exceed max")
        for label in ("pitch_half_width_deg", "yaw_half_width_deg", "roll_half_width_deg"):
            if getattr(self, label) < 0.0:
                raise InvalidInputError(f"{label}: must be non-negative")


@dataclass(frozen=True)
class DashcamProfile:
    """A calibrated dashcam intrinsics profile identified by name."""

    profile_id: str
    intrinsics: CameraIntrinsics


@dataclass(frozen=True)
class DashcamRigSample:
    """One sampled rig: perturbed intrinsics plus camera-to-vehicle extrinsics."""

    intrinsics: CameraIntrinsics
    extrinsics: RigidPose
    category: str
    base_profile_id: str
    pitch_deg: float
    yaw_deg: float
    roll_deg: float


BUILTIN_CATEGORIES = {
    "sedan": VehicleCategory(
        name="sedan",
        height_range=(1.1, 1.3),
        forward_range=(2.0, 2.5),
        lateral_range=(-0.5, 0.5),
        pitch_half_width_deg=10.0,
        yaw_half_width_deg=4.0,
        roll_half_width_deg=2.0,
    ),
    "suv": VehicleCategory(
        name="suv",
        height_range=(1.4, 1.7),
        forward_range=(1.8, 2.3),
        lateral_range=(-0.5, 0.5),
        pitch_half_width_deg=10.0,
        yaw_half_width_deg=4.0,
        roll_half_width_deg=2.0,
    ),
    "truck": VehicleCategory(
        name="truck",
        height_range=(1.9, 2.6),
        forward_range=(1.2, 2.2),
        lateral_range=(-0.6, 0.6),
        pitch_half_width_deg=12.0,
        yaw_half_width_deg=4.0,
        roll_half_width_deg=2.0,
    ),
}

# Generic stand-ins for calibrated consumer dashcams; coefficients are kept
# inside the invertible region of each lens model.
DEFAULT_PROFILES = (
    DashcamProfile(
        "wide-1080p",
        CameraIntrinsics(
            model="pinhole_brown",
            fx=1150.0,
            fy=1145.0,
            cx=958.0,
            cy=542.0,
            width=1920,
            height=1080,
            k1=-0.18,
            k2=0.04,
            k3=-0.003,
            p1=0.0008,
            p2=-0.0005,
        ),
    ),
    DashcamProfile(
        "fisheye-2k",
        CameraIntrinsics(
            model="fisheye_equidistant",
            fx=820.0,
            fy=818.0,
            cx=1282.0,
            cy=718.0,
            width=2560,
            height=1440,
            k1=0.035,
            k2=0.002,
            k3=0.0,
        ),
    ),
    DashcamProfile(
        "narrow-720p",
        CameraIntrinsics(
            model="pinhole_brown",
            fx=1000.0,
            fy=998.0,
            cx=641.0,
            cy=359.0,
            width=1280,
            height=720,
            k1=-0.10,
            k2=0.01,
            k3=0.0,
        ),
    ),
)


def perturb_intrinsics(
    base: CameraIntrinsics,
    rng: np.random.Generator,
    focal_frac: float = 0.05,
    center_frac: float = 0.01,
) -> CameraIntrinsics:
    """Apply uniform calibration noise to a base profile, keeping distortion fixed."""
    if focal_frac < 0.0 or center_frac < 0.0:
        raise InvalidInputError("noise fractions must be non-negative")
    fx = base.fx * rng.uniform(1.0 - focal_frac, 1.0 + focal_frac)
    fy = base.fy * rng.uniform(1.0 - focal_frac, 1.0 + focal_frac)
    cx = base.cx + rng.uniform(-center_frac, center_frac) * base.width
    cy = base.cy + rng.uniform(-center_frac, center_frac) * base.height
    return replace(base, fx=fx, fy=fy, cx=cx, cy=cy)


def sample_rig(
    rng: np.random.Generator,
    category: VehicleCategory,
    profiles=DEFAULT_PROFILES,
) -> DashcamRigSample:
    """Draw one dashcam rig: extrinsics from the category, then a perturbed profile.

    The perturbation rotation is yaw o pitch o roll about the vehicle +z,
    +y, +x axes, composed onto the forward-looking camera alignment.
    """
    profiles = tuple(profiles)
    if not profiles:
        raise ConfigError("profile list is empty")

    tx = rng.uniform(*category.forward_range)
    ty = rng.uniform(*category.lateral_range)
    tz = rng.uniform(*category.height_range)
    pitch = rng.uniform(-category.pitch_half_width_deg, category.pitch_half_width_deg)
    yaw = rng.uniform(-category.yaw_half_width_deg, category.yaw_half_width_deg)
    roll = rng.uniform(-category.roll_half_width_deg, category.roll_half_width_deg)
    profile = profiles[int(rng.integers(len(profiles)))]
    intrinsics = perturb_intrinsics(profile.intrinsics, rng)

    deg = np.pi / 180.0
    q_yaw = quat_from_axis_angle([0.0, 0.0, 1.0], yaw * deg)
    q_pitch = quat_from_axis_angle([0.0, 1.0, 0.0], pitch * deg)
    q_roll = quat_from_axis_angle([1.0, 0.0, 0.0], roll * deg)
    perturb = quat_multiply(q_yaw, quat_multiply(q_pitch, q_roll))
    rotation = quat_multiply(perturb, camera_alignment_quat())

    return DashcamRigSample(
        intrinsics=intrinsics,
        extrinsics=RigidPose(rotation, np.array([tx, ty, tz])),
        category=category.name,
        base_profile_id=profile.profile_id,
        pitch_deg=float(pitch),
        yaw_deg=float(yaw),
        roll_deg=float(roll),
    )


def photometric_normalize(img: ImagePlane, exposure_gain: float, gamma: float) -> ImagePlane:
    """Exposure and gamma correction: v -> clamp01((gain * v) ** (1 / gamma))."""
    if not exposure_gain > 0.0:
        raise InvalidInputError("exposure_gain must be > 0")
    if not gamma > 0.0:
        raise InvalidInputError("gamma must be > 0")
    scaled = np.clip(exposure_gain * img.data, 0.0, None) ** (1.0 / gamma)
    return ImagePlane(np.clip(scaled, 0.0, 1.0))
