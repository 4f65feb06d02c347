"""Sensor-geometry toolkit for cross-embodiment sensor conversion pipelines.

Submodules: geometry (poses and value types), rangeview (spin-image
codec), cameras (lens models and raymaps), rig_sampler (dashcam rig
synthesis), splats (ray-traced Gaussian rendering), fusion (attention and
conditioning layouts), losses (loss suite and metrics), rollout
(autoregressive harness), formats (file formats and configuration), cli.
"""

from .geometry import ImagePlane, PointCloud, RigidPose
from .rangeview import LidarCalibration, NormalMap, SpinImage
from .cameras import CameraIntrinsics, Raymap
from .rig_sampler import DashcamProfile, DashcamRigSample, VehicleCategory
from .splats import Gaussian3D, GaussianScene, SceneObject
from .losses import FeatureStack, LatentGaussianStats, LossWeights
from .rollout import DaggerConfig, FrameState, RolloutContext

__version__ = "0.1.0"

__all__ = [
    "ImagePlane",
    "PointCloud",
    "RigidPose",
    "LidarCalibration",
    "NormalMap",
    "SpinImage",
    "CameraIntrinsics",
    "Raymap",
    "DashcamProfile",
    "DashcamRigSample",
    "VehicleCategory",
    "Gaussian3D",
    "GaussianScene",
    "SceneObject",
    "FeatureStack",
    "LatentGaussianStats",
    "LossWeights",
    "DaggerConfig",
    "FrameState",
    "RolloutContext",
    "__version__",
]
