import math

import numpy as np
import pytest

from sensorkit.cameras import CameraIntrinsics, pixel_centers, unproject
from sensorkit.errors import InvalidInputError, TimeRangeError
from sensorkit.geometry import (
    RigidPose,
    identity_pose,
    quat_from_axis_angle,
    rotate_vector,
)
from sensorkit.splats import (
    Gaussian3D,
    GaussianScene,
    composite_rays,
    instantiate,
    ray_gaussian_response,
    render,
)


def iso(mean, scale, opacity=1.0, color=(1.0, 1.0, 1.0)):
    return Gaussian3D(mean, [scale] * 3, [1.0, 0, 0, 0], opacity, color)


def random_gaussian(rng, center=(0.0, 0.0, 15.0)):
    return Gaussian3D(
        rng.uniform(-8, 8, 3) + center,
        rng.uniform(0.2, 1.0, 3),
        rng.normal(size=4),
        float(rng.uniform(0.3, 1.0)),
        rng.uniform(0.0, 1.0, 3),
    )


class TestInstantiate:
    def test_static_only(self):
        scene = GaussianScene(static=(iso([1, 2, 3], 0.5),))
        out = instantiate(scene, 0)
        assert len(out) == 1
        assert np.allclose(out[0].mean, [1, 2, 3])

    def test_identity_pose_object_unmoved(self):
        from sensorkit.splats import SceneObject

        obj = SceneObject("car", (iso([1, 0, 0], 0.3),), (identity_pose(),))
        scene = GaussianScene(static=(), objects=(obj,))
        out = instantiate(scene, 0)
        assert np.allclose(out[0].mean, [1, 0, 0])

    def test_translated_object(self):
        from sensorkit.splats import SceneObject

        pose = RigidPose(np.array([1.0, 0, 0, 0]), np.array([5.0, 0.0, 0.0]))
        obj = SceneObject("car", (iso([1, 1, 1], 0.3), iso([0, 0, 0], 0.3)), (pose,))
        scene = GaussianScene(static=(), objects=(obj,))
        out = instantiate(scene, 0)
        assert np.allclose(out[0].mean, [6, 1, 1])
        assert np.allclose(out[1].mean, [5, 0, 0])

    def test_time_out_of_range(self):
        scene = GaussianScene(static=(iso([0, 0, 5], 1.0),), timesteps=3)
        with pytest.raises(TimeRangeError):
            instantiate(scene, 3)
        with pytest.raises(TimeRangeError):
            instantiate(scene, -1)

    def test_trajectory_must_cover_timesteps(self):
        from sensorkit.splats import SceneObject

        obj = SceneObject("car", (iso([0, 0, 0], 0.2),), (identity_pose(),))
        with pytest.raises(InvalidInputError):
            GaussianScene(static=(), objects=(obj,), timesteps=2)


class TestRayGaussianResponse:
    def test_through_mean(self):
        t_peak, alpha = ray_gaussian_response([0, 0, 0], [0, 0, 1], iso([0, 0, 7], 0.5))
        assert t_peak == pytest.approx(7.0, abs=1e-12)
        assert alpha == pytest.approx(1.0, abs=1e-12)

    def test_perpendicular_offset_closed_form(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            s = float(rng.uniform(0.1, 2.0))
            d = rng.normal(size=3)
            d /= np.linalg.norm(d)
            origin = rng.uniform(-5, 5, 3)
            along = float(rng.uniform(1.0, 20.0))
            perp = np.cross(d, rng.normal(size=3))
            perp /= np.linalg.norm(perp)
            offset = float(rng.uniform(0.0, 3.0 * s))
            mean = origin + along * d + offset * perp
            g = Gaussian3D(mean, [s] * 3, rng.normal(size=4), 1.0, [1, 1, 1])
            _, alpha = ray_gaussian_response(origin, d, g)
            expected = math.exp(-(offset**2) / (2.0 * s**2))
            assert alpha == pytest.approx(expected, abs=1e-6)

    def test_behind_origin(self):
        _, alpha = ray_gaussian_response([0, 0, 0], [0, 0, 1], iso([0, 0, -4], 0.5))
        assert alpha == 0.0

    def test_requires_unit_direction(self):
        with pytest.raises(InvalidInputError):
            ray_gaussian_response([0, 0, 0], [0, 0, 2], iso([0, 0, 4], 0.5))


class TestRender:
    def test_empty_scene_is_background(self):
        scene = GaussianScene(static=(), background=[0.1, 0.2, 0.3])
        intr = CameraIntrinsics("pinhole_brown", 50, 50, 16, 16, 32, 32)
        color, depth = render(scene, intr, identity_pose(), 0)
        assert np.allclose(color.data, [0.1, 0.2, 0.3])
        assert np.all(depth.data == 0.0)

    def test_single_gaussian_peak_and_depth(self):
        scene = GaussianScene(static=(iso([0, 0, 10], 0.5, color=(1, 0, 0)),))
        intr = CameraIntrinsics("pinhole_brown", 100, 100, 63.5, 63.5, 128, 128)
        color, depth = render(scene, intr, identity_pose(), 0)
        peak = np.unravel_index(np.argmax(color.data[:, :, 0]), (128, 128))
        assert abs(peak[0] - 63) <= 0 and abs(peak[1] - 63) <= 0
        assert depth.data[63, 63, 0] == pytest.approx(10.0, abs=0.1)

    def test_two_gaussian_compositing(self):
        front = iso([0, 0, 5], 0.4, opacity=0.6, color=(1, 0, 0))
        back = iso([0, 0, 10], 0.4, opacity=1.0, color=(0, 0, 1))
        scene = GaussianScene(static=(front, back))
        intr = CameraIntrinsics("pinhole_brown", 100, 100, 31.5, 31.5, 64, 64)
        color, _ = render(scene, intr, identity_pose(), 0)
        assert np.abs(color.data[31, 31] - [0.6, 0.0, 0.4]).max() < 1e-3

    def test_opaque_front_hides_back(self):
        front = iso([0, 0, 5], 0.4, opacity=1.0, color=(1, 0, 0))
        back = iso([0, 0, 10], 0.4, opacity=1.0, color=(0, 1, 0))
        color, depth = composite_rays([front, back], np.zeros(3), np.array([[0.0, 0.0, 1.0]]), np.zeros(3))
        assert np.allclose(color[0], [1, 0, 0], atol=1e-12)
        assert depth[0] == pytest.approx(5.0, abs=1e-9)

    def test_splat_order_invariance_bit_exact(self):
        rng = np.random.default_rng(21)
        splats = tuple(random_gaussian(rng) for _ in range(64))
        intr = CameraIntrinsics("pinhole_brown", 80, 80, 48, 48, 96, 96)
        a_color, a_depth = render(GaussianScene(static=splats), intr, identity_pose(), 0)
        perm = tuple(splats[i] for i in rng.permutation(len(splats)))
        b_color, b_depth = render(GaussianScene(static=perm), intr, identity_pose(), 0)
        assert np.array_equal(a_color.data, b_color.data)
        assert np.array_equal(a_depth.data, b_depth.data)

    def test_composite_matches_render_for_both_camera_models(self):
        # Rendering depends on the camera only through the rays it casts.
        rng = np.random.default_rng(22)
        splats = [random_gaussian(rng) for _ in range(32)]
        scene = GaussianScene(static=tuple(splats), background=[0.05, 0.05, 0.05])
        pose = RigidPose(quat_from_axis_angle([0, 1, 0], 0.2), np.array([0.5, -0.3, 0.2]))
        for model, kappa in (("pinhole_brown", {"k1": -0.1}), ("fisheye_equidistant", {"k1": 0.02})):
            intr = CameraIntrinsics(model, 60, 60, 24, 24, 48, 48, **kappa)
            color, depth = render(scene, intr, pose, 0)
            dirs = rotate_vector(pose, unproject(intr, pixel_centers(intr)))
            dirs /= np.linalg.norm(dirs, axis=-1, keepdims=True)
            ref_color, ref_depth = composite_rays(
                list(scene.static), pose.translation, dirs, scene.background
            )
            assert np.array_equal(color.data, ref_color)
            assert np.array_equal(depth.data[:, :, 0], ref_depth)

    def test_color_components_stay_in_unit_range(self):
        rng = np.random.default_rng(23)
        splats = tuple(random_gaussian(rng) for _ in range(128))
        intr = CameraIntrinsics("pinhole_brown", 70, 70, 32, 32, 64, 64)
        color, _ = render(GaussianScene(static=splats), intr, identity_pose(), 0)
        assert color.data.min() >= 0.0 and color.data.max() <= 1.0


class TestGaussianValidation:
    def test_scale_positive(self):
        with pytest.raises(InvalidInputError):
            Gaussian3D([0, 0, 0], [0.0, 1, 1], [1, 0, 0, 0], 1.0, [1, 1, 1])

    def test_opacity_range(self):
        with pytest.raises(InvalidInputError):
            Gaussian3D([0, 0, 0], [1, 1, 1], [1, 0, 0, 0], 0.0, [1, 1, 1])

    def test_covariance_is_spd(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            g = random_gaussian(rng)
            cov = g.covariance()
            assert np.allclose(cov, cov.T, atol=1e-12)
            assert np.all(np.linalg.eigvalsh(cov) > 0.0)
