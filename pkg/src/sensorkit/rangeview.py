"""Bidirectional codec between point clouds and the LiDAR range-view spin image.

A spin image is an [H, W, 4] float32 tensor whose rows index beam
elevation, columns index azimuth, and whose channels hold (range,
intensity, elongation, validity), all normalized to [0, 1]. Range 1.0
corresponds to the calibration's max range in meters (default 150);
ranges beyond it are clamped, not dropped. Cells without a return carry
validity 0 and zeros in the other channels.

Azimuth is measured counter-clockwise from +x in the sensor frame, and
column centers sit at azimuth_start + (col + 0.5) * span / W, which makes
projection and unprojection exact inverses for in-cell points. On
projection, the nearest return wins when several points fall into one
cell. The beam table is strictly monotonic in elevation; the shipped
calibrations list row 0 as the highest beam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, ShapeError
from .geometry import PointCloud, RigidPose, inverse_pose, transform_point

__all__ = [
    "CH_RANGE",
    "CH_INTENSITY",
    "CH_ELONGATION",
    "CH_VALIDITY",
    "LidarCalibration",
    "SpinImage",
    "NormalMap",
    "normalize_range",
    "project_points",
    "unproject_spin",
    "unproject_grid",
    "compute_normals",
]

CH_RANGE = 0
CH_INTENSITY = 1
CH_ELONGATION = 2
CH_VALIDITY = 3

_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class LidarCalibration:
    """Spinning-LiDAR geometry: beam table, azimuth window, and mounting pose."""

    sensor_to_vehicle: RigidPose
    beam_elevations: np.ndarray
    azimuth_start: float
    azimuth_end: float
    n_columns: int
    max_range: float = 150.0

    def __post_init__(self):
        beams = np.array(self.beam_elevations, dtype=np.float64)
        if beams.ndim != 1 or beams.size < 1:
            raise ShapeError("beam_elevations: expected a non-empty 1-D array")
        if not np.all(np.isfinite(beams)):
            raise InvalidInputError("beam_elevations: values must be finite")
        diffs = np.diff(beams)
        if beams.size > 1 and not (np.all(diffs > 0.0) or np.all(diffs < 0.0)):
            raise InvalidInputError("beam_elevations: must be strictly monotonic")
        beams.setflags(write=False)
        object.__setattr__(self, "beam_elevations", beams)
        span = self.azimuth_end - self.azimuth_start
        if not 0.0 < span <= _TWO_PI + 1e-12:
            raise InvalidInputError(
                f"azimuth span must lie in (0, 2*pi], got {span!r}"
            )
        if self.n_columns < 1:
            raise InvalidInputError("n_columns must be >= 1")
        if not self.max_range > 0.0:
            raise InvalidInputError("max_range must be > 0")

    @property
    def n_rows(self) -> int:
        return int(self.beam_elevations.size)

    @property
    def span(self) -> float:
        return float(self.azimuth_end - self.azimuth_start)

    @property
    def azimuth_step(self) -> float:
        return self.span / self.n_columns


@dataclass(frozen=True)
class SpinImage:
    """Range-view tensor of shape (H, W, 4): range, intensity, elongation, validity."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float32)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ShapeError(f"data: expected shape (H, W, 4), got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidInputError("data: values must be finite")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise InvalidInputError("data: values must lie in [0, 1]")
        validity = arr[:, :, CH_VALIDITY]
        if not np.all((validity == 0.0) | (validity == 1.0)):
            raise InvalidInputError("validity channel must be exactly 0 or 1")
        invalid = validity == 0.0
        if np.any(arr[invalid][:, :CH_VALIDITY] != 0.0):
            raise InvalidInputError("invalid cells must be zero in all channels")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def range(self) -> np.ndarray:
        return self.data[:, :, CH_RANGE]

    @property
    def intensity(self) -> np.ndarray:
        return self.data[:, :, CH_INTENSITY]

    @property
    def elongation(self) -> np.ndarray:
        return self.data[:, :, CH_ELONGATION]

    @property
    def validity(self) -> np.ndarray:
        return self.data[:, :, CH_VALIDITY]

    @classmethod
    def empty(cls, height: int, width: int) -> "SpinImage":
        return cls(np.zeros((height, width, 4), dtype=np.float32))


@dataclass(frozen=True)
class NormalMap:
    """Per-cell unit surface normals with a validity mask."""

    normals: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        normals = np.array(self.normals, dtype=np.float64)
        valid = np.array(self.valid, dtype=bool)
        if normals.ndim != 3 or normals.shape[2] != 3:
            raise ShapeError(f"normals: expected shape (H, W, 3), got {normals.shape}")
        if valid.shape != normals.shape[:2]:
            raise ShapeError("valid: shape must match the normal grid")
        norms = np.linalg.norm(normals[valid], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("valid normals must have unit norm")
        normals.setflags(write=False)
        valid.setflags(write=False)
        object.__setattr__(self, "normals", normals)
        object.__setattr__(self, "valid", valid)


def normalize_range(r, calib: LidarCalibration):
    """Clamp a metric range at max_range and scale linearly into [0, 1]."""
    arr = np.asarray(r, dtype=np.float64)
    if np.any(arr < 0.0):
        raise InvalidInputError("range must be non-negative")
    out = np.minimum(arr, calib.max_range) / calib.max_range
    return float(out) if np.isscalar(r) else out


def _cell_directions(calib: LidarCalibration, rows, cols):
    azimuth = calib.azimuth_start + (np.asarray(cols) + 0.5) * calib.azimuth_step
    elevation = calib.beam_elevations[np.asarray(rows)]
    cos_e = np.cos(elevation)
    return np.stack(
        [cos_e * np.cos(azimuth), cos_e * np.sin(azimuth), np.sin(elevation)], axis=-1
    )


def unproject_spin(spin: SpinImage, calib: LidarCalibration) -> PointCloud:
    """Lift every valid cell to a 3D point in the vehicle frame.

    Points are emitted in row-major cell order. A valid cell with range 0
    lifts to the sensor origin and cannot be projected back.
    """
    _check_dims(spin, calib)
    valid = spin.validity == 1.0
    rows, cols = np.nonzero(valid)
    if rows.size == 0:
        return PointCloud.empty()
    ranges_m = spin.range[rows, cols].astype(np.float64) * calib.max_range
    pts_sensor = ranges_m[:, None] * _cell_directions(calib, rows, cols)
    pts_vehicle = transform_point(calib.sensor_to_vehicle, pts_sensor)
    return PointCloud(
        pts_vehicle,
        spin.intensity[rows, cols].astype(np.float64),
        spin.elongation[rows, cols].astype(np.float64),
    )


def project_points(cloud: PointCloud, calib: LidarCalibration) -> SpinImage:
    """Bin points into the range view; the nearest return wins per cell.

    Points farther than max_range are clamped to normalized range 1.0.
    Points whose elevation falls more than half the local beam spacing
    outside the beam table are dropped, as are points on the sensor
    origin and, for partial azimuth windows, points outside the window.
    """
    h, w = calib.n_rows, calib.n_columns
    data = np.zeros((h, w, 4), dtype=np.float64)
    if len(cloud) == 0:
        return SpinImage(data)

    pts = transform_point(inverse_pose(calib.sensor_to_vehicle), cloud.points)
    dist = np.linalg.norm(pts, axis=1)
    keep = dist > 1e-9

    azimuth = np.arctan2(pts[:, 1], pts[:, 0])
    with np.errstate(invalid="ignore", divide="ignore"):
        elevation = np.arcsin(np.clip(pts[:, 2] / np.maximum(dist, 1e-300), -1.0, 1.0))

    diff = np.mod(azimuth - calib.azimuth_start, _TWO_PI)
    col = np.floor(diff / calib.azimuth_step).astype(np.int64)
    full_circle = calib.span >= _TWO_PI - 1e-12
    if full_circle:
        col = col % w  # boundary cells can round up to w on a closed circle
    else:
        keep &= col < w

    beams = calib.beam_elevations
    ascending = bool(beams.size < 2 or beams[1] > beams[0])
    asc = beams if ascending else beams[::-1]
    pos = np.searchsorted(asc, elevation)
    lo = np.clip(pos - 1, 0, beams.size - 1)
    hi = np.clip(pos, 0, beams.size - 1)
    nearer_hi = np.abs(asc[hi] - elevation) < np.abs(asc[lo] - elevation)
    asc_idx = np.where(nearer_hi, hi, lo)
    row = asc_idx if ascending else beams.size - 1 - asc_idx

    if beams.size > 1:
        low_gap = 0.5 * (asc[1] - asc[0])
        high_gap = 0.5 * (asc[-1] - asc[-2])
        keep &= elevation >= asc[0] - low_gap
        keep &= elevation <= asc[-1] + high_gap

    row, col, dist = row[keep], col[keep], dist[keep]
    intensity = cloud.intensity[keep]
    elongation = cloud.elongation[keep]
    # Scatter in decreasing-range order so the nearest return lands last.
    order = np.argsort(-dist, kind="stable")
    r, c = row[order], col[order]
    data[r, c, CH_RANGE] = np.minimum(dist[order], calib.max_range) / calib.max_range
    data[r, c, CH_INTENSITY] = intensity[order]
    data[r, c, CH_ELONGATION] = elongation[order]
    data[r, c, CH_VALIDITY] = 1.0
    return SpinImage(data)


def unproject_grid(spin: SpinImage, calib: LidarCalibration):
    """Dense (H, W, 3) point grid in the vehicle frame plus the validity mask."""
    _check_dims(spin, calib)
    h, w = spin.height, spin.width
    rows, cols = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    dirs = _cell_directions(calib, rows.ravel(), cols.ravel())
    ranges_m = spin.range.astype(np.float64).ravel() * calib.max_range
    pts = transform_point(calib.sensor_to_vehicle, ranges_m[:, None] * dirs)
    return pts.reshape(h, w, 3), spin.validity == 1.0


def compute_normals(spin: SpinImage, calib: LidarCalibration) -> NormalMap:
    """Central-difference surface normals over the unprojected point grid.

    A cell gets a normal only when it and its four axis neighbors are
    valid; the normal is oriented to face the sensor origin. Cells with a
    degenerate cross product are marked invalid rather than raising.
    """
    points, valid = unproject_grid(spin, calib)
    h, w = valid.shape
    normals = np.zeros((h, w, 3), dtype=np.float64)
    out_valid = np.zeros((h, w), dtype=bool)
    if h < 3 or w < 3:
        return NormalMap(normals, out_valid)

    core = (
        valid[1:-1, 1:-1]
        & valid[1:-1, 2:]
        & valid[1:-1, :-2]
        & valid[2:, 1:-1]
        & valid[:-2, 1:-1]
    )
    dx = points[1:-1, 2:] - points[1:-1, :-2]
    dy = points[2:, 1:-1] - points[:-2, 1:-1]
    cross = np.cross(dx, dy)
    norm = np.linalg.norm(cross, axis=-1)
    ok = core & (norm >= 1e-12)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = cross / np.maximum(norm, 1e-300)[..., None]

    origin = calib.sensor_to_vehicle.translation
    to_sensor = origin - points[1:-1, 1:-1]
    flip = np.sum(unit * to_sensor, axis=-1) < 0.0
    unit = np.where(flip[..., None], -unit, unit)

    normals[1:-1, 1:-1][ok] = unit[ok]
    out_valid[1:-1, 1:-1] = ok
    return NormalMap(normals, out_valid)


def _check_dims(spin: SpinImage, calib: LidarCalibration):
    if spin.height != calib.n_rows or spin.width != calib.n_columns:
        raise ShapeError(
            f"spin image is {spin.height}x{spin.width} but calibration expects "
            f"{calib.n_rows}x{calib.n_columns}"
        )
