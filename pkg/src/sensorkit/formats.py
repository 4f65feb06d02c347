"""Bit-exact file formats and the structured configuration loader.

Binary layouts (all little-endian, platform-independent):

  SPIN  magic "SPIN", u32 version=1, u32 H, u32 W, u32 max_range_mm,
        then H*W*4 float32 channel-interleaved per cell in the order
        (range, intensity, elongation, validity). File length is exactly
        20 + H*W*16 bytes.
  RAYM  magic "RAYM", u32 version=1, u32 H, u32 W, then H*W*6 float32
        per cell (origin xyz, direction xyz). Length 16 + H*W*24.
  DEPT  magic "DEPT", u32 version=1, u32 H, u32 W, then H*W float32
        depths in meters. Length 16 + H*W*4.

Point clouds use ASCII PLY with float properties x, y, z, intensity,
elongation written at 10 significant digits; images use binary PPM (P6,
maxval 255). Every reader rejects bad magic, bad version, truncation, and
trailing garbage with the byte offset of the problem. All writers go
through a temp file and an atomic rename so failures never leave partial
output behind.

Configuration is a single JSON document with optional sections: cameras,
lidar, scene, categories, loss_weights, dagger. Unknown keys anywhere are
rejected, and every error names the full key path (e.g. cameras[0].fx).
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass

import numpy as np

from .cameras import CameraIntrinsics, Raymap
from .errors import ConfigError, FormatError, ToolkitError
from .geometry import ImagePlane, PointCloud, RigidPose, identity_pose
from .losses import LossWeights
from .rangeview import LidarCalibration, SpinImage
from .rig_sampler import VehicleCategory
from .rollout import DaggerConfig
from .splats import Gaussian3D, GaussianScene, SceneObject

__all__ = [
    "NamedCamera",
    "ToolkitConfig",
    "atomic_write_bytes",
    "write_spin",
    "read_spin",
    "write_raymap",
    "read_raymap",
    "write_depth",
    "read_depth",
    "write_ply",
    "read_ply",
    "write_ppm",
    "read_ppm",
    "read_config",
    "write_config",
    "parse_config_dict",
    "config_to_dict",
]

SPIN_MAGIC = b"SPIN"
RAYM_MAGIC = b"RAYM"
DEPT_MAGIC = b"DEPT"
FORMAT_VERSION = 1


def atomic_write_bytes(path, payload: bytes):
    """Write to a temp file in the target directory, then rename into place."""
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_header(data: bytes, magic: bytes, n_fields: int, path) -> tuple:
    header_len = 8 + 4 * n_fields
    if len(data) < header_len:
        raise FormatError(f"{path}: file shorter than the header", offset=len(data))
    if data[:4] != magic:
        raise FormatError(
            f"{path}: bad magic {data[:4]!r}, expected {magic!r}", offset=0
        )
    version = struct.unpack_from("<I", data, 4)[0]
    if version != FORMAT_VERSION:
        raise FormatError(
            f"{path}: unsupported version {version}, expected {FORMAT_VERSION}", offset=4
        )
    return struct.unpack_from(f"<{n_fields}I", data, 8)


def _check_payload(data: bytes, header_len: int, expected_payload: int, path):
    expected = header_len + expected_payload
    if len(data) < expected:
        raise FormatError(
            f"{path}: truncated payload, expected {expected} bytes, got {len(data)}",
            offset=len(data),
        )
    if len(data) > expected:
        raise FormatError(
            f"{path}: {len(data) - expected} trailing bytes after payload",
            offset=expected,
        )


def write_spin(spin: SpinImage, calib: LidarCalibration, path):
    header = struct.pack(
        "<4sIIII",
        SPIN_MAGIC,
        FORMAT_VERSION,
        spin.height,
        spin.width,
        int(round(calib.max_range * 1000.0)),
    )
    atomic_write_bytes(path, header + spin.data.astype("<f4").tobytes())


def read_spin(path) -> tuple[SpinImage, float]:
    """Parse a SPIN file; returns the spin image and the max range in meters."""
    with open(path, "rb") as handle:
        data = handle.read()
    h, w, max_range_mm = _read_header(data, SPIN_MAGIC, 3, path)
    _check_payload(data, 20, h * w * 16, path)
    payload = np.frombuffer(data, dtype="<f4", count=h * w * 4, offset=20)
    grid = payload.reshape(h, w, 4)
    validity = grid[:, :, 3]
    bad = np.nonzero(~((validity == 0.0) | (validity == 1.0)).ravel())[0]
    if bad.size:
        raise FormatError(
            f"{path}: validity value {validity.ravel()[bad[0]]!r} is not 0 or 1",
            offset=20 + int(bad[0]) * 16 + 12,
        )
    try:
        spin = SpinImage(grid)
    except ToolkitError as exc:
        raise FormatError(f"{path}: invalid spin payload: {exc}") from exc
    return spin, max_range_mm / 1000.0


def write_raymap(raymap: Raymap, path):
    header = struct.pack("<4sIII", RAYM_MAGIC, FORMAT_VERSION, raymap.height, raymap.width)
    cells = np.concatenate([raymap.origins, raymap.directions], axis=-1)
    atomic_write_bytes(path, header + cells.astype("<f4").tobytes())


def read_raymap(path) -> Raymap:
    with open(path, "rb") as handle:
        data = handle.read()
    h, w = _read_header(data, RAYM_MAGIC, 2, path)
    _check_payload(data, 16, h * w * 24, path)
    cells = np.frombuffer(data, dtype="<f4", count=h * w * 6, offset=16).reshape(h, w, 6)
    cells = cells.astype(np.float64)
    try:
        return Raymap(cells[:, :, :3], cells[:, :, 3:])
    except ToolkitError as exc:
        raise FormatError(f"{path}: invalid raymap payload: {exc}") from exc


def write_depth(depth, path):
    arr = np.asarray(depth, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2:
        raise FormatError(f"depth grid must be 2-D, got shape {arr.shape}")
    header = struct.pack("<4sIII", DEPT_MAGIC, FORMAT_VERSION, arr.shape[0], arr.shape[1])
    atomic_write_bytes(path, header + arr.astype("<f4").tobytes())


def read_depth(path) -> np.ndarray:
    with open(path, "rb") as handle:
        data = handle.read()
    h, w = _read_header(data, DEPT_MAGIC, 2, path)
    _check_payload(data, 16, h * w * 4, path)
    grid = np.frombuffer(data, dtype="<f4", count=h * w, offset=16)
    return grid.reshape(h, w).astype(np.float64)


_PLY_PROPERTIES = ("x", "y", "z", "intensity", "elongation")


def write_ply(cloud: PointCloud, path):
    lines = [
        "ply",
        "format ascii 1.0",
        f"element vertex {len(cloud)}",
    ]
    lines += [f"property float {name}" for name in _PLY_PROPERTIES]
    lines.append("end_header")
    for point, intensity, elongation in zip(cloud.points, cloud.intensity, cloud.elongation):
        lines.append(
            f"{point[0]:.10g} {point[1]:.10g} {point[2]:.10g} "
            f"{intensity:.10g} {elongation:.10g}"
        )
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("ascii"))


def read_ply(path) -> PointCloud:
    with open(path, "rb") as handle:
        raw = handle.read()
    try:
        text = raw.decode("ascii")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not ASCII: {exc}") from exc
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise FormatError(f"{path}: missing 'ply' signature", offset=0)
    count = None
    properties = []
    body_start = None
    for i, line in enumerate(lines[1:], start=1):
        token = line.strip()
        if token == "end_header":
            body_start = i + 1
            break
        if token.startswith("element vertex"):
            parts = token.split()
            if len(parts) != 3 or not parts[2].isdigit():
                raise FormatError(f"{path}: malformed element line {token!r}")
            count = int(parts[2])
        elif token.startswith("element"):
            raise FormatError(f"{path}: unsupported element {token!r}")
        elif token.startswith("property"):
            parts = token.split()
            if len(parts) != 3 or parts[1] != "float":
                raise FormatError(f"{path}: unsupported property {token!r}")
            properties.append(parts[2])
        elif token.startswith(("format", "comment")):
            continue
        else:
            raise FormatError(f"{path}: unexpected header line {token!r}")
    if body_start is None:
        raise FormatError(f"{path}: missing end_header")
    if count is None:
        raise FormatError(f"{path}: missing vertex count")
    if tuple(properties) != _PLY_PROPERTIES:
        raise FormatError(
            f"{path}: expected properties {_PLY_PROPERTIES}, got {tuple(properties)}"
        )
    body = [line for line in lines[body_start:] if line.strip()]
    if len(body) != count:
        raise FormatError(
            f"{path}: header promises {count} vertices but body has {len(body)}"
        )
    values = np.zeros((count, 5), dtype=np.float64)
    for i, line in enumerate(body):
        parts = line.split()
        if len(parts) != 5:
            raise FormatError(f"{path}: vertex {i} has {len(parts)} fields, expected 5")
        try:
            values[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"{path}: vertex {i}: {exc}") from exc
    try:
        return PointCloud(values[:, :3], values[:, 3], values[:, 4])
    except ToolkitError as exc:
        raise FormatError(f"{path}: invalid vertex data: {exc}") from exc


def write_ppm(image: ImagePlane, path):
    if image.channels != 3:
        raise FormatError(f"PPM needs 3 channels, got {image.channels}")
    if image.data.min() < 0.0 or image.data.max() > 1.0:
        raise FormatError("PPM expects photometric values in [0, 1]")
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    pixels = np.round(image.data * 255.0).astype(np.uint8)
    atomic_write_bytes(path, header + pixels.tobytes())


def read_ppm(path) -> ImagePlane:
    with open(path, "rb") as handle:
        data = handle.read()
    if not data.startswith(b"P6"):
        raise FormatError(f"{path}: not a binary PPM (P6)", offset=0)
    fields = []
    pos = 2
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: malformed PPM header", offset=pos)
        fields.append(data[start:pos])
    pos += 1  # single whitespace after maxval
    try:
        width, height, maxval = (int(f) for f in fields)
    except ValueError as exc:
        raise FormatError(f"{path}: malformed PPM header: {exc}") from exc
    if maxval != 255:
        raise FormatError(f"{path}: unsupported maxval {maxval}")
    expected = pos + width * height * 3
    if len(data) < expected:
        raise FormatError(f"{path}: truncated pixel data", offset=len(data))
    if len(data) > expected:
        raise FormatError(f"{path}: trailing bytes after pixel data", offset=expected)
    pixels = np.frombuffer(data, dtype=np.uint8, count=width * height * 3, offset=pos)
    return ImagePlane(pixels.reshape(height, width, 3).astype(np.float64) / 255.0)


# --------------------------------------------------------------------------
# JSON configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class NamedCamera:
    name: str
    intrinsics: CameraIntrinsics
    pose: RigidPose


@dataclass(frozen=True)
class ToolkitConfig:
    cameras: tuple[NamedCamera, ...] = ()
    lidar: LidarCalibration | None = None
    scene: GaussianScene | None = None
    categories: tuple[VehicleCategory, ...] = ()
    loss_weights: LossWeights | None = None
    dagger: DaggerConfig | None = None


def _require_mapping(value, path):
    if not isinstance(value, dict):
        raise ConfigError("expected an object", path=path)
    return value


def _require_list(value, path):
    if not isinstance(value, list):
        raise ConfigError("expected a list", path=path)
    return value


def _reject_unknown(mapping: dict, allowed, path):
    for key in mapping:
        if key not in allowed:
            raise ConfigError("unknown key", path=f"{path}.{key}" if path else key)


def _get_number(mapping, key, path, default=None):
    if key not in mapping:
        if default is not None:
            return default
        raise ConfigError("missing required key", path=f"{path}.{key}")
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError("expected a number", path=f"{path}.{key}")
    return float(value)


def _get_int(mapping, key, path, default=None):
    if key not in mapping:
        if default is not None:
            return default
        raise ConfigError("missing required key", path=f"{path}.{key}")
    value = mapping[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError("expected an integer", path=f"{path}.{key}")
    return value


def _get_vector(mapping, key, path, length, default=None):
    if key not in mapping:
        if default is not None:
            return list(default)
        raise ConfigError("missing required key", path=f"{path}.{key}")
    value = mapping[key]
    if not isinstance(value, list) or len(value) != length:
        raise ConfigError(f"expected a list of {length} numbers", path=f"{path}.{key}")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)):
            raise ConfigError("expected a number", path=f"{path}.{key}[{i}]")
        out.append(float(item))
    return out


def _parse_pose(value, path) -> RigidPose:
    mapping = _require_mapping(value, path)
    _reject_unknown(mapping, {"quat", "trans"}, path)
    quat = _get_vector(mapping, "quat", path, 4)
    trans = _get_vector(mapping, "trans", path, 3)
    try:
        return RigidPose(np.asarray(quat), np.asarray(trans))
    except ToolkitError as exc:
        raise ConfigError(str(exc), path=path) from exc


_CAMERA_KEYS = {
    "name", "model", "fx", "fy", "cx", "cy",
    "k1", "k2", "k3", "p1", "p2", "width", "height", "pose",
}


def _parse_camera(value, path) -> NamedCamera:
    mapping = _require_mapping(value, path)
    _reject_unknown(mapping, _CAMERA_KEYS, path)
    model = mapping.get("model")
    if not isinstance(model, str):
        raise ConfigError("missing or non-string key", path=f"{path}.model")
    name = mapping.get("name", "")
    if not isinstance(name, str):
        raise ConfigError("expected a string", path=f"{path}.name")
    kwargs = {
        "fx": _get_number(mapping, "fx", path),
        "fy": _get_number(mapping, "fy", path),
        "cx": _get_number(mapping, "cx", path),
        "cy": _get_number(mapping, "cy", path),
        "width": _get_int(mapping, "width", path),
        "height": _get_int(mapping, "height", path),
        "k1": _get_number(mapping, "k1", path, 0.0),
        "k2": _get_number(mapping, "k2", path, 0.0),
        "k3": _get_number(mapping, "k3", path, 0.0),
        "p1": _get_number(mapping, "p1", path, 0.0),
        "p2": _get_number(mapping, "p2", path, 0.0),
    }
    for key in ("fx", "fy"):
        if not kwargs[key] > 0.0:
            raise ConfigError("must be positive", path=f"{path}.{key}")
    for key in ("width", "height"):
        if kwargs[key] < 1:
            raise ConfigError("must be at least 1", path=f"{path}.{key}")
    if not 0.0 <= kwargs["cx"] < kwargs["width"]:
        raise ConfigError("must lie in [0, width)", path=f"{path}.cx")
    if not 0.0 <= kwargs["cy"] < kwargs["height"]:
        raise ConfigError("must lie in [0, height)", path=f"{path}.cy")
    try:
        intr = CameraIntrinsics(model=model, **kwargs)
    except ToolkitError as exc:
        raise ConfigError(str(exc), path=path) from exc
    pose = _parse_pose(mapping["pose"], f"{path}.pose") if "pose" in mapping else identity_pose()
    return NamedCamera(name=name, intrinsics=intr, pose=pose)


_LIDAR_KEYS = {"elevations", "azimuth_start", "azimuth_end", "n_columns", "max_range", "pose"}


def _parse_lidar(value, path) -> LidarCalibration:
    mapping = _require_mapping(value, path)
    _reject_unknown(mapping, _LIDAR_KEYS, path)
    elevations = _require_list(mapping.get("elevations"), f"{path}.elevations")
    pose = _parse_pose(mapping["pose"], f"{path}.pose") if "pose" in mapping else identity_pose()
    try:
        return LidarCalibration(
            sensor_to_vehicle=pose,
            beam_elevations=np.asarray(elevations, dtype=np.float64),
            azimuth_start=_get_number(mapping, "azimuth_start", path),
            azimuth_end=_get_number(mapping, "azimuth_end", path),
            n_columns=_get_int(mapping, "n_columns", path),
            max_range=_get_number(mapping, "max_range", path, 150.0),
        )
    except ToolkitError as exc:
        raise ConfigError(str(exc), path=path) from exc


_SPLAT_KEYS = {"mean", "scale", "quat", "opacity", "color"}


def _parse_splat(value, path) -> Gaussian3D:
    mapping = _require_mapping(value, path)
    _reject_unknown(mapping, _SPLAT_KEYS, path)
    try:
        return Gaussian3D(
            mean=np.asarray(_get_vector(mapping, "mean", path, 3)),
            scale=np.asarray(_get_vector(mapping, "scale", path, 3)),
            orientation=np.asarray(_get_vector(mapping, "quat", path, 4, default=[1, 0, 0, 0])),
            opacity=_get_number(mapping, "opacity", path),
            color=np.asarray(_get_vector(mapping, "color", path, 3)),
        )
    except ToolkitError as exc:
        raise ConfigError(str(exc), path=path) from exc


_SCENE_KEYS = {"timesteps", "background", "static", "objects"}
_OBJECT_KEYS = {"id", "splats", "trajectory"}


def _parse_scene(value, path) -> GaussianScene:
    mapping = _require_mapping(value, path)
    _reject_unknown(mapping, _SCENE_KEYS, path)
    static = [
        _parse_splat(item, f"{path}.static[{i}]")
        for i, item in enumerate(_require_list(mapping.get("static", []), f"{path}.static"))
    ]
    objects = []
    for i, item in enumerate(_require_list(mapping.get("objects", []), f"{path}.objects")):
        obj_path = f"{path}.objects[{i}]"
        obj = _require_mapping(item, obj_path)
        _reject_unknown(obj, _OBJECT_KEYS, obj_path)
        object_id = obj.get("id")
        if not isinstance(object_id, str):
            raise ConfigError("missing or non-string key", path=f"{obj_path}.id")
        splats = [
            _parse_splat(s, f"{obj_path}.splats[{j}]")
            for j, s in enumerate(_require_list(obj.get("splats"), f"{obj_path}.splats"))
        ]
        trajectory = [
            _parse_pose(p, f"{obj_path}.trajectory[{j}]")
            for j, p in enumerate(
                _require_list(obj.get("trajectory"), f"{obj_path}.trajectory")
            )
        ]
        try:
            objects.append(SceneObject(object_id, tuple(splats), tuple(trajectory)))
        except ToolkitError as exc:
            raise ConfigError(str(exc), path=obj_path) from exc
    timesteps = _get_int(
        mapping,
        "timesteps",
        path,
        max((len(o.trajectory) for o in objects), default=1),
    )
    background = _get_vector(mapping, "background", path, 3, default=[0.0, 0.0, 0.0])
    try:
        return GaussianScene(
            static=tuple(static),
            objects=tuple(objects),
            timesteps=timesteps,
            background=np.asarray(background),
        )
    except ToolkitError as exc:
        raise ConfigError(str(exc), path=path) from exc


_CATEGORY_KEYS = {
    "name", "height_range", "forward_range", "lateral_range",
    "pitch_deg", "yaw_deg", "roll_deg",
}


def _parse_category(value, path) -> VehicleCategory:
    mapping = _require_mapping(value, path)
    _reject_unknown(mapping, _CATEGORY_KEYS, path)
    name = mapping.get("name")
    if not isinstance(name, str):
        raise ConfigError("missing or non-string key", path=f"{path}.name")
    try:
        return VehicleCategory(
            name=name,
            height_range=tuple(_get_vector(mapping, "height_range", path, 2)),
            forward_range=tuple(_get_vector(mapping, "forward_range", path, 2)),
            lateral_range=tuple(_get_vector(mapping, "lateral_range", path, 2)),
            pitch_half_width_deg=_get_number(mapping, "pitch_deg", path),
            yaw_half_width_deg=_get_number(mapping, "yaw_deg", path),
            roll_half_width_deg=_get_number(mapping, "roll_deg", path),
        )
    except ToolkitError as exc:
        raise ConfigError(str(exc), path=path) from exc


_WEIGHT_KEYS = {
    "range_l1", "elongation_l1", "intensity_l1", "validity_bce", "normals_lpips",
    "elongation_lpips", "intensity_lpips", "validity_lpips", "kl",
}

_DAGGER_KEYS = {"p_ground_truth", "p_condition_drop", "p_spatial_mask", "horizon", "seed"}

_TOP_KEYS = {"cameras", "lidar", "scene", "categories", "loss_weights", "dagger"}


def parse_config_dict(document: dict) -> ToolkitConfig:
    mapping = _require_mapping(document, "")
    _reject_unknown(mapping, _TOP_KEYS, "")
    cameras = tuple(
        _parse_camera(item, f"cameras[{i}]")
        for i, item in enumerate(_require_list(mapping.get("cameras", []), "cameras"))
    )
    lidar = _parse_lidar(mapping["lidar"], "lidar") if "lidar" in mapping else None
    scene = _parse_scene(mapping["scene"], "scene") if "scene" in mapping else None
    categories = tuple(
        _parse_category(item, f"categories[{i}]")
        for i, item in enumerate(_require_list(mapping.get("categories", []), "categories"))
    )
    loss_weights = None
    if "loss_weights" in mapping:
        section = _require_mapping(mapping["loss_weights"], "loss_weights")
        _reject_unknown(section, _WEIGHT_KEYS, "loss_weights")
        kwargs = {key: _get_number(section, key, "loss_weights", 1.0) for key in _WEIGHT_KEYS}
        try:
            loss_weights = LossWeights(**kwargs)
        except ToolkitError as exc:
            raise ConfigError(str(exc), path="loss_weights") from exc
    dagger = None
    if "dagger" in mapping:
        section = _require_mapping(mapping["dagger"], "dagger")
        _reject_unknown(section, _DAGGER_KEYS, "dagger")
        try:
            dagger = DaggerConfig(
                p_ground_truth=_get_number(section, "p_ground_truth", "dagger", 0.2),
                p_condition_drop=_get_number(section, "p_condition_drop", "dagger", 0.5),
                p_spatial_mask=_get_number(section, "p_spatial_mask", "dagger", 0.2),
                horizon=_get_int(section, "horizon", "dagger", 6),
                seed=_get_int(section, "seed", "dagger", 0),
            )
        except ToolkitError as exc:
            raise ConfigError(str(exc), path="dagger") from exc
    return ToolkitConfig(
        cameras=cameras,
        lidar=lidar,
        scene=scene,
        categories=categories,
        loss_weights=loss_weights,
        dagger=dagger,
    )


def read_config(path) -> ToolkitConfig:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            document = json.load(handle)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}", offset=exc.pos) from exc
    return parse_config_dict(document)


def _pose_to_dict(pose: RigidPose) -> dict:
    return {"quat": pose.rotation.tolist(), "trans": pose.translation.tolist()}


def _splat_to_dict(g: Gaussian3D) -> dict:
    return {
        "mean": g.mean.tolist(),
        "scale": g.scale.tolist(),
        "quat": g.orientation.tolist(),
        "opacity": g.opacity,
        "color": g.color.tolist(),
    }


def config_to_dict(config: ToolkitConfig) -> dict:
    document: dict = {}
    if config.cameras:
        document["cameras"] = [
            {
                "name": cam.name,
                "model": cam.intrinsics.model,
                "fx": cam.intrinsics.fx,
                "fy": cam.intrinsics.fy,
                "cx": cam.intrinsics.cx,
                "cy": cam.intrinsics.cy,
                "k1": cam.intrinsics.k1,
                "k2": cam.intrinsics.k2,
                "k3": cam.intrinsics.k3,
                "p1": cam.intrinsics.p1,
                "p2": cam.intrinsics.p2,
                "width": cam.intrinsics.width,
                "height": cam.intrinsics.height,
                "pose": _pose_to_dict(cam.pose),
            }
            for cam in config.cameras
        ]
    if config.lidar is not None:
        document["lidar"] = {
            "elevations": config.lidar.beam_elevations.tolist(),
            "azimuth_start": config.lidar.azimuth_start,
            "azimuth_end": config.lidar.azimuth_end,
            "n_columns": config.lidar.n_columns,
            "max_range": config.lidar.max_range,
            "pose": _pose_to_dict(config.lidar.sensor_to_vehicle),
        }
    if config.scene is not None:
        document["scene"] = {
            "timesteps": config.scene.timesteps,
            "background": config.scene.background.tolist(),
            "static": [_splat_to_dict(g) for g in config.scene.static],
            "objects": [
                {
                    "id": obj.object_id,
                    "splats": [_splat_to_dict(g) for g in obj.splats],
                    "trajectory": [_pose_to_dict(p) for p in obj.trajectory],
                }
                for obj in config.scene.objects
            ],
        }
    if config.categories:
        document["categories"] = [
            {
                "name": cat.name,
                "height_range": list(cat.height_range),
                "forward_range": list(cat.forward_range),
                "lateral_range": list(cat.lateral_range),
                "pitch_deg": cat.pitch_half_width_deg,
                "yaw_deg": cat.yaw_half_width_deg,
                "roll_deg": cat.roll_half_width_deg,
            }
            for cat in config.categories
        ]
    if config.loss_weights is not None:
        document["loss_weights"] = config.loss_weights.as_dict()
    if config.dagger is not None:
        document["dagger"] = {
            "p_ground_truth": config.dagger.p_ground_truth,
            "p_condition_drop": config.dagger.p_condition_drop,
            "p_spatial_mask": config.dagger.p_spatial_mask,
            "horizon": config.dagger.horizon,
            "seed": config.dagger.seed,
        }
    return document


def write_config(config: ToolkitConfig, path):
    payload = json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"
    atomic_write_bytes(path, payload.encode("utf-8"))
