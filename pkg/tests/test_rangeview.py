import numpy as np
import pytest

from sensorkit.errors import InvalidInputError, ShapeError
from sensorkit.geometry import (
    PointCloud,
    RigidPose,
    identity_pose,
    inverse_pose,
    transform_point,
)
from sensorkit.rangeview import (
    LidarCalibration,
    SpinImage,
    compute_normals,
    normalize_range,
    project_points,
    unproject_spin,
)


def simple_calib(max_range=150.0):
    return LidarCalibration(
        sensor_to_vehicle=identity_pose(),
        beam_elevations=np.array([np.pi / 2, 0.3, 0.0, -0.3]),
        azimuth_start=-np.pi / 4,
        azimuth_end=2 * np.pi - np.pi / 4,
        n_columns=4,
        max_range=max_range,
    )


def random_spin(rng, h, w, density=0.4):
    mask = (rng.uniform(size=(h, w)) < density).astype(np.float32)
    data = np.zeros((h, w, 4), dtype=np.float32)
    data[..., 0] = ((0.02 + 0.98 * rng.uniform(size=(h, w))) * mask).astype(np.float32)
    data[..., 1] = (rng.uniform(size=(h, w)) * mask).astype(np.float32)
    data[..., 2] = (rng.uniform(size=(h, w)) * mask).astype(np.float32)
    data[..., 3] = mask
    return SpinImage(data)


def random_calib(rng, h, w):
    top = rng.uniform(0.1, 0.6)
    bottom = rng.uniform(-0.6, -0.1)
    beams = np.linspace(top, bottom, h) + rng.uniform(-0.001, 0.001, h)
    beams = np.sort(beams)[::-1]
    start = rng.uniform(-np.pi, np.pi)
    full = rng.uniform() < 0.7
    span = 2 * np.pi if full else rng.uniform(0.5, 5.0)
    quat = rng.normal(size=4)
    pose = RigidPose(quat, rng.uniform(-2, 2, 3))
    return LidarCalibration(pose, beams, start, start + span, w, max_range=150.0)


class TestNormalizeRange:
    def test_max_range_maps_to_one(self):
        assert normalize_range(150.0, simple_calib()) == 1.0

    def test_zero(self):
        assert normalize_range(0.0, simple_calib()) == 0.0

    def test_clamps_beyond_max(self):
        assert normalize_range(300.0, simple_calib()) == 1.0

    def test_linear_midpoint(self):
        assert normalize_range(75.0, simple_calib()) == 0.5

    def test_negative_rejected(self):
        with pytest.raises(InvalidInputError):
            normalize_range(-1.0, simple_calib())


class TestUnproject:
    def test_boresight_cell(self):
        calib = simple_calib()
        data = np.zeros((4, 4, 4), dtype=np.float32)
        data[2, 0, 0] = 0.5  # elevation 0, column center at azimuth 0
        data[2, 0, 3] = 1.0
        cloud = unproject_spin(SpinImage(data), calib)
        assert len(cloud) == 1
        assert np.allclose(cloud.points[0], [75.0, 0.0, 0.0], atol=1e-9)

    def test_straight_up_cell(self):
        calib = simple_calib()
        data = np.zeros((4, 4, 4), dtype=np.float32)
        data[0, 0, 0] = 0.5
        data[0, 0, 3] = 1.0
        cloud = unproject_spin(SpinImage(data), calib)
        assert np.allclose(cloud.points[0], [0.0, 0.0, 75.0], atol=1e-9)

    def test_all_invalid_gives_empty_cloud(self):
        cloud = unproject_spin(SpinImage.empty(4, 4), simple_calib())
        assert len(cloud) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            unproject_spin(SpinImage.empty(3, 4), simple_calib())

    def test_sensor_distance_matches_denormalized_range(self):
        rng = np.random.default_rng(3)
        calib = random_calib(rng, 12, 48)
        spin = random_spin(rng, 12, 48)
        cloud = unproject_spin(spin, calib)
        sensor_pts = transform_point(inverse_pose(calib.sensor_to_vehicle), cloud.points)
        expected = spin.range[spin.validity == 1.0].astype(np.float64) * calib.max_range
        assert np.allclose(np.linalg.norm(sensor_pts, axis=1), expected, atol=1e-9)


class TestProject:
    def test_z_buffer_keeps_nearest(self):
        calib = simple_calib()
        cloud = PointCloud(
            np.array([[20.0, 0, 0], [10.0, 0, 0]]),
            np.array([0.25, 0.75]),
            np.array([0.1, 0.9]),
        )
        spin = project_points(cloud, calib)
        assert spin.range[2, 0] == pytest.approx(10.0 / 150.0, abs=1e-6)
        assert spin.intensity[2, 0] == pytest.approx(0.75, abs=1e-6)
        assert spin.elongation[2, 0] == pytest.approx(0.9, abs=1e-6)

    def test_empty_cloud_gives_zero_spin(self):
        spin = project_points(PointCloud.empty(), simple_calib())
        assert np.array_equal(spin.data, np.zeros((4, 4, 4), dtype=np.float32))

    def test_beyond_max_range_clamps_to_one(self):
        calib = simple_calib()
        cloud = PointCloud(np.array([[400.0, 0, 0]]), np.array([0.5]), np.array([0.5]))
        spin = project_points(cloud, calib)
        assert spin.range[2, 0] == 1.0
        assert spin.validity[2, 0] == 1.0

    def test_elevation_outside_table_dropped(self):
        calib = simple_calib()
        # Elevation -0.9 is far below the lowest beam (-0.3, spacing 0.3).
        point = 10.0 * np.array([np.cos(-0.9), 0.0, np.sin(-0.9)])
        spin = project_points(
            PointCloud(point[None, :], np.array([0.5]), np.array([0.5])), calib
        )
        assert spin.validity.sum() == 0

    def test_roundtrip_identity_on_valid_cells(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            h = int(rng.integers(4, 24))
            w = int(rng.integers(8, 96))
            calib = random_calib(rng, h, w)
            cloud = unproject_spin(random_spin(rng, h, w), calib)
            first = project_points(cloud, calib)
            second = project_points(unproject_spin(first, calib), calib)
            assert np.array_equal(first.validity, second.validity)
            assert np.abs(first.range - second.range).max() <= 1e-5
            assert np.abs(first.intensity - second.intensity).max() <= 1e-6
            assert np.abs(first.elongation - second.elongation).max() <= 1e-6


class TestComputeNormals:
    def test_flat_ground_plane(self):
        beams = np.linspace(-np.pi / 9, -np.pi / 3, 12)  # looking down
        calib = LidarCalibration(identity_pose(), beams, 0.0, 2 * np.pi, 64)
        rows, cols = np.meshgrid(np.arange(12), np.arange(64), indexing="ij")
        elev = beams[rows]
        ranges = -2.0 / np.sin(elev)  # plane z = -2
        data = np.zeros((12, 64, 4), dtype=np.float32)
        data[..., 0] = ranges / calib.max_range
        data[..., 3] = 1.0
        result = compute_normals(SpinImage(data), calib)
        inner = result.valid[1:-1, 1:-1]
        assert inner.all()
        normals = result.normals[1:-1, 1:-1][inner]
        assert np.abs(normals - np.array([0.0, 0.0, 1.0])).max() < 1e-3

    def test_sphere_normals_face_sensor(self):
        beams = np.linspace(0.5, -0.5, 10)
        calib = LidarCalibration(identity_pose(), beams, 0.0, 2 * np.pi, 48)
        data = np.zeros((10, 48, 4), dtype=np.float32)
        data[..., 0] = 20.0 / calib.max_range
        data[..., 3] = 1.0
        spin = SpinImage(data)
        result = compute_normals(spin, calib)
        cloud_grid = unproject_spin(spin, calib).points.reshape(10, 48, 3)
        dirs = cloud_grid / np.linalg.norm(cloud_grid, axis=-1, keepdims=True)
        valid = result.valid
        assert valid[1:-1, 1:-1].any()
        assert np.abs(result.normals[valid] + dirs[valid]).max() < 1e-3

    def test_isolated_cell_is_invalid(self):
        calib = simple_calib()
        data = np.zeros((4, 4, 4), dtype=np.float32)
        data[1, 1, 0] = 0.3
        data[1, 1, 3] = 1.0
        result = compute_normals(SpinImage(data), calib)
        assert not result.valid.any()

    def test_degenerate_cross_marked_invalid(self):
        calib = simple_calib()
        data = np.zeros((4, 4, 4), dtype=np.float32)
        data[0:3, 0:3, 3] = 1.0  # valid 3x3 patch with all ranges zero
        result = compute_normals(SpinImage(data), calib)
        assert not result.valid.any()

    def test_flipped_beam_table_same_normal_set(self):
        rng = np.random.default_rng(5)
        beams = np.sort(rng.uniform(-0.5, 0.5, 8))[::-1]
        calib = LidarCalibration(identity_pose(), beams, 0.0, 2 * np.pi, 32)
        spin = random_spin(rng, 8, 32, density=0.9)
        flipped_calib = LidarCalibration(
            identity_pose(), beams[::-1].copy(), 0.0, 2 * np.pi, 32
        )
        flipped_spin = SpinImage(spin.data[::-1].copy())
        a = compute_normals(spin, calib)
        b = compute_normals(flipped_spin, flipped_calib)
        assert np.array_equal(a.valid, b.valid[::-1])
        assert np.allclose(a.normals, b.normals[::-1], atol=1e-12)

    def test_all_valid_normals_unit_length(self):
        rng = np.random.default_rng(9)
        calib = random_calib(rng, 10, 40)
        result = compute_normals(random_spin(rng, 10, 40, density=0.95), calib)
        norms = np.linalg.norm(result.normals[result.valid], axis=-1)
        assert np.abs(norms - 1.0).max() < 1e-6


class TestSpinImageInvariants:
    def test_validity_must_be_binary(self):
        data = np.zeros((2, 2, 4), dtype=np.float32)
        data[0, 0, 3] = 0.5
        with pytest.raises(InvalidInputError):
            SpinImage(data)

    def test_invalid_cells_must_be_zero(self):
        data = np.zeros((2, 2, 4), dtype=np.float32)
        data[0, 0, 0] = 0.2  # range without validity
        with pytest.raises(InvalidInputError):
            SpinImage(data)

    def test_channel_count_fixed(self):
        with pytest.raises(ShapeError):
            SpinImage(np.zeros((2, 2, 3), dtype=np.float32))

    def test_calibration_rejects_bad_span(self):
        with pytest.raises(InvalidInputError):
            LidarCalibration(identity_pose(), np.array([0.1, 0.0]), 0.0, 7.0, 8)

    def test_calibration_rejects_non_monotonic_beams(self):
        with pytest.raises(InvalidInputError):
            LidarCalibration(identity_pose(), np.array([0.1, 0.3, 0.2]), 0.0, 1.0, 8)
