"""Multi-subcommand command line interface.

Subcommands: convert, render, sample-rig, raymap, metrics, gradcheck,
rollout, pairgen. Exit codes are a stable contract: 0 success, 1 usage
error, 2 file or config format error, 3 numeric or geometry error.
Sampling subcommands require an explicit --seed; there is no hidden
entropy. Writers are atomic, so no subcommand leaves partial output on
failure. The rollout drift report is a CSV with header
step,view,psnr_db,chamfer_m and a rendered figure is saved next to it.
"""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import formats
from .cameras import make_camera_ring, make_raymap, scale_intrinsics
from .errors import ConfigError, FormatError, InvalidInputError, ToolkitError
from .geometry import ImagePlane
from .losses import chamfer, psnr, random_gradcheck_instance, grad_check, ssim
from .rangeview import project_points, unproject_spin
from .rig_sampler import BUILTIN_CATEGORIES, DEFAULT_PROFILES, DashcamProfile, sample_rig
from .rollout import (
    MODE_DAGGER,
    MODE_INFERENCE,
    AdditiveNoisePredictor,
    DaggerConfig,
    FrameState,
    IdentityPredictor,
    drift_curve,
    rollout,
)
from .splats import render

log = logging.getLogger("sensorkit")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage problems by default; the contract wants 1.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common_flags(parser: argparse.ArgumentParser, *, seed_required: bool):
    parser.add_argument("--seed", type=int, required=seed_required,
                        help="seed for all randomness" + (" (required)" if seed_required else ""))
    parser.add_argument("--config", type=Path, help="JSON configuration file")
    parser.add_argument("--verbose", action="store_true", help="enable debug logging")


def _load_config(args, *, need=()):
    if args.config is None:
        if need:
            raise ConfigError(f"--config with a {need[0]} section is required")
        return formats.ToolkitConfig()
    cfg = formats.read_config(args.config)
    for section in need:
        if not getattr(cfg, section):
            raise ConfigError(f"{args.config}: missing required section", path=section)
    return cfg


def cmd_convert(args) -> int:
    cfg = _load_config(args, need=("lidar",))
    calib = cfg.lidar
    if args.direction == "cloud-to-spin":
        cloud = formats.read_ply(args.input)
        spin = project_points(cloud, calib)
        formats.write_spin(spin, calib, args.output)
        print(f"points={len(cloud)} valid_cells={int(spin.validity.sum())}")
    else:
        spin, max_range = formats.read_spin(args.input)
        calib = replace(calib, max_range=max_range)
        cloud = unproject_spin(spin, calib)
        formats.write_ply(cloud, args.output)
        print(f"valid_cells={int(spin.validity.sum())} points={len(cloud)}")
    return EXIT_OK


def cmd_render(args) -> int:
    scene = formats.read_config(args.scene).scene
    if scene is None:
        raise ConfigError(f"{args.scene}: missing required section", path="scene")
    rig = formats.read_config(args.rig).cameras
    if not rig:
        raise ConfigError(f"{args.rig}: missing required section", path="cameras")
    log.debug("scene: %d static splats, %d objects, %d timesteps",
              len(scene.static), len(scene.objects), scene.timesteps)
    for i, cam in enumerate(rig):
        color, depth = render(scene, cam.intrinsics, cam.pose, args.time)
        formats.write_ppm(color, f"{args.out}_view{i:02d}.ppm")
        formats.write_depth(depth.data, f"{args.out}_view{i:02d}.dept")
        log.debug("view %d: hit fraction %.3f", i, float((depth.data > 0).mean()))
    print(f"rendered {len(rig)} view(s) at t={args.time} to {args.out}_view*.ppm/.dept")
    return EXIT_OK


def _rig_sample_record(sample) -> dict:
    return {
        "category": sample.category,
        "profile": sample.base_profile_id,
        "model": sample.intrinsics.model,
        "fx": sample.intrinsics.fx,
        "fy": sample.intrinsics.fy,
        "cx": sample.intrinsics.cx,
        "cy": sample.intrinsics.cy,
        "width": sample.intrinsics.width,
        "height": sample.intrinsics.height,
        "quat": sample.extrinsics.rotation.tolist(),
        "trans": sample.extrinsics.translation.tolist(),
        "pitch_deg": sample.pitch_deg,
        "yaw_deg": sample.yaw_deg,
        "roll_deg": sample.roll_deg,
    }


def _resolve_category(name: str, cfg) -> "object":
    for cat in cfg.categories:
        if cat.name == name:
            return cat
    if name in BUILTIN_CATEGORIES:
        return BUILTIN_CATEGORIES[name]
    raise ConfigError(f"unknown vehicle category {name!r}")


def _load_profiles(path) -> tuple[DashcamProfile, ...]:
    if path is None:
        return DEFAULT_PROFILES
    cameras = formats.read_config(path).cameras
    if not cameras:
        raise ConfigError(f"{path}: no camera profiles", path="cameras")
    return tuple(
        DashcamProfile(cam.name or f"profile{i}", cam.intrinsics)
        for i, cam in enumerate(cameras)
    )


def cmd_sample_rig(args) -> int:
    cfg = _load_config(args)
    category = _resolve_category(args.category, cfg)
    profiles = _load_profiles(args.profiles)
    rng = np.random.default_rng(args.seed)
    for _ in range(args.count):
        sample = sample_rig(rng, category, profiles)
        print(json.dumps(_rig_sample_record(sample), sort_keys=True))
    return EXIT_OK


def cmd_raymap(args) -> int:
    rig = formats.read_config(args.rig).cameras
    if not rig:
        raise ConfigError(f"{args.rig}: missing required section", path="cameras")
    if not (0 <= args.target < len(rig) and 0 <= args.reference < len(rig)):
        raise InvalidInputError(
            f"camera indices must lie in [0, {len(rig)}), "
            f"got target={args.target} reference={args.reference}"
        )
    target = rig[args.target]
    raymap = make_raymap(
        (target.intrinsics, target.pose), rig[args.reference].pose, args.downsample
    )
    formats.write_raymap(raymap, args.out)
    print(f"raymap {raymap.height}x{raymap.width} written to {args.out}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    if args.metric == "chamfer":
        value = chamfer(formats.read_ply(args.a), formats.read_ply(args.b))
    else:
        img_a, img_b = formats.read_ppm(args.a), formats.read_ppm(args.b)
        value = psnr(img_a, img_b) if args.metric == "psnr" else ssim(img_a, img_b)
    print(f"{args.metric}={value:.12g}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    rng = np.random.default_rng(args.seed)
    loss_fn, grad_fn, point = random_gradcheck_instance(args.loss, rng)
    error = grad_check(loss_fn, grad_fn, point)
    print(f"{args.loss} max_relative_error={error:.6e}")
    return EXIT_OK


_FRAME_RE = re.compile(r"^dash_(\d+)\.ppm$")


def load_frame_dir(path) -> tuple[list[ImagePlane], list[FrameState]]:
    """Load a rollout frame directory.

    Layout per step t (zero-padded to three digits): dash_{t}.ppm holds the
    conditioning frame, view{v:02d}_{t}.ppm the ground-truth camera views,
    and spin_{t}.spin the ground-truth spin image.
    """
    directory = Path(path)
    steps = sorted(
        int(m.group(1)) for m in (_FRAME_RE.match(p.name) for p in directory.iterdir()) if m
    )
    if not steps:
        raise FormatError(f"{directory}: no dash_*.ppm frames found")
    if steps != list(range(len(steps))):
        raise FormatError(f"{directory}: step indices are not contiguous from 0")
    dashcam, gt = [], []
    for t in steps:
        dashcam.append(formats.read_ppm(directory / f"dash_{t:03d}.ppm"))
        views = []
        for v in range(100):
            view_path = directory / f"view{v:02d}_{t:03d}.ppm"
            if not view_path.exists():
                break
            views.append(formats.read_ppm(view_path))
        spin, _ = formats.read_spin(directory / f"spin_{t:03d}.spin")
        gt.append(FrameState(views=tuple(views), spin=spin, t=t))
    return dashcam, gt


def cmd_rollout(args) -> int:
    cfg = _load_config(args, need=("lidar",))
    dashcam, gt = load_frame_dir(args.frames)
    base = cfg.dagger if cfg.dagger is not None else DaggerConfig()
    dagger_cfg = replace(base, seed=args.seed, horizon=args.horizon)

    if args.predictor == "identity":
        predictor = IdentityPredictor(gt[0])
    else:
        predictor = AdditiveNoisePredictor(gt, noise_scale=args.noise_scale, seed=args.seed)

    mode = MODE_INFERENCE if args.mode == "inference" else MODE_DAGGER
    result = rollout(
        predictor,
        dashcam,
        gt_frames=gt if mode == MODE_DAGGER else None,
        cfg=dagger_cfg,
        mode=mode,
    )
    records = drift_curve(result.frames, gt[: len(result.frames)], cfg.lidar)

    lines = ["step,view,psnr_db,chamfer_m"]
    for record in records:
        for view, value in enumerate(record.view_psnr_db):
            lines.append(f"{record.step},{view},{value},{record.chamfer_m}")
    formats.atomic_write_bytes(args.report, ("\n".join(lines) + "\n").encode("ascii"))

    from .plotting import save_drift_figure

    figure_path = str(Path(args.report).with_suffix(".png"))
    save_drift_figure(records, figure_path)
    print(f"report={args.report} figure={figure_path} steps={len(records)}")
    return EXIT_OK


def cmd_pairgen(args) -> int:
    scene = formats.read_config(args.scene).scene
    if scene is None:
        raise ConfigError(f"{args.scene}: missing required section", path="scene")
    cfg = _load_config(args)
    category = _resolve_category(args.category, cfg)
    profiles = _load_profiles(args.profiles)
    times = [int(tok) for tok in args.times.split(",") if tok]
    if not times:
        raise InvalidInputError("--times must list at least one timestep")

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = args.size
    ring = make_camera_ring(n_views=8, width=size, height=size)
    if args.ring is not None:
        ring_cams = formats.read_config(args.ring).cameras
        if not ring_cams:
            raise ConfigError(f"{args.ring}: missing required section", path="cameras")
        ring = [(scale_intrinsics(c.intrinsics, size, size), c.pose) for c in ring_cams]
    reference_pose = ring[0][1]

    rng = np.random.default_rng(args.seed)
    samples = [sample_rig(rng, category, profiles) for _ in range(args.rigs)]

    entries = []
    for r, sample in enumerate(samples):
        log.debug("rig %d: profile %s, mount %s", r, sample.base_profile_id,
                  np.array2string(sample.extrinsics.translation, precision=3))
        dash_intr = scale_intrinsics(sample.intrinsics, size, size)
        cameras = ring + [(dash_intr, sample.extrinsics)]
        for t in times:
            for v, (intr, pose) in enumerate(cameras):
                stem = f"pair_r{r:02d}_t{t:03d}_view{v:02d}"
                color, _depth = render(scene, intr, pose, t)
                formats.write_ppm(color, out_dir / f"{stem}.ppm")
                raymap = make_raymap((intr, pose), reference_pose, args.raymap_downsample)
                formats.write_raymap(raymap, out_dir / f"{stem}.raym")
                entries.append(
                    {
                        "rig": r,
                        "time": t,
                        "view": v,
                        "role": "dashcam" if v == len(ring) else "ring",
                        "image": f"{stem}.ppm",
                        "raymap": f"{stem}.raym",
                    }
                )
    manifest = {
        "seed": args.seed,
        "category": category.name,
        "size": size,
        "times": times,
        "rigs": [_rig_sample_record(s) for s in samples],
        "entries": entries,
    }
    payload = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
    formats.atomic_write_bytes(out_dir / "manifest.json", payload.encode("utf-8"))
    print(
        f"rigs={len(samples)} times={len(times)} images={len(entries)} "
        f"raymaps={len(entries)} manifest={out_dir / 'manifest.json'}"
    )
    return EXIT_OK


def _build_parser() -> _Parser:
    parser = _Parser(prog="sensorkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", parents=[], help="convert between point clouds and spin images")
    _common_flags(p, seed_required=False)
    p.add_argument("--direction", choices=["cloud-to-spin", "spin-to-cloud"], required=True)
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", dest="output", type=Path, required=True)
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("render", help="ray-trace a Gaussian scene through a camera rig")
    _common_flags(p, seed_required=False)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--rig", type=Path, required=True)
    p.add_argument("--time", type=int, required=True)
    p.add_argument("--out", required=True, help="output file prefix")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("sample-rig", help="sample dashcam rigs from a vehicle category")
    _common_flags(p, seed_required=True)
    p.add_argument("--category", default="sedan")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--profiles", type=Path, help="camera profile config (default: built-ins)")
    p.set_defaults(func=cmd_sample_rig)

    p = sub.add_parser("raymap", help="write the raymap of one rig camera")
    _common_flags(p, seed_required=False)
    p.add_argument("--rig", type=Path, required=True)
    p.add_argument("--target", type=int, required=True)
    p.add_argument("--reference", type=int, default=0)
    p.add_argument("--downsample", type=int, default=1)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_raymap)

    p = sub.add_parser("metrics", help="compare two files with a named metric")
    _common_flags(p, seed_required=False)
    p.add_argument("metric", choices=["chamfer", "psnr", "ssim"])
    p.add_argument("--a", type=Path, required=True)
    p.add_argument("--b", type=Path, required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("gradcheck", help="finite-difference check of an analytic gradient")
    _common_flags(p, seed_required=True)
    p.add_argument("--loss", choices=["l1", "bce", "kl", "lpips"], required=True)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("rollout", help="run an autoregressive rollout and report drift")
    _common_flags(p, seed_required=True)
    p.add_argument("--frames", type=Path, required=True, help="frame directory")
    p.add_argument("--predictor", choices=["identity", "noise"], required=True)
    p.add_argument("--horizon", type=int, default=6)
    p.add_argument("--mode", choices=["inference", "dagger"], default="inference")
    p.add_argument("--noise-scale", type=float, default=0.01)
    p.add_argument("--report", type=Path, required=True, help="CSV output path")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("pairgen", help="render paired dashcam/ring views with raymaps")
    _common_flags(p, seed_required=True)
    p.add_argument("--scene", type=Path, required=True)
    p.add_argument("--category", default="sedan")
    p.add_argument("--profiles", type=Path)
    p.add_argument("--rigs", type=int, required=True)
    p.add_argument("--times", required=True, help="comma-separated timesteps")
    p.add_argument("--size", type=int, default=256, help="render resolution (square)")
    p.add_argument("--ring", type=Path, help="override ring cameras (config with cameras)")
    p.add_argument("--raymap-downsample", type=int, default=8)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=cmd_pairgen)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except FormatError as exc:
        print(f"sensorkit: format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except OSError as exc:
        print(f"sensorkit: i/o error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ToolkitError as exc:
        print(f"sensorkit: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


def entry():
    raise SystemExit(main())
